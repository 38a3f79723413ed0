"""Nightlight class labels from a one-dimensional Gaussian mixture."""
from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InputError

_TINY = np.finfo(float).tiny


@dataclass
class Gmm1D:
    k: int
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    n_iter: int = 0
    converged: bool = False
    history: list = field(default_factory=list, repr=False)

    def normalized(self):
        """Copy with components sorted by ascending mean."""
        order = np.argsort(self.means, kind="stable")
        return dataclasses.replace(self, weights=self.weights[order], means=self.means[order],
                                   variances=self.variances[order])

    def log_joint(self, values):
        """Per-component ``log(weight * density)`` for each value, shape (n, k)."""
        x = np.atleast_1d(np.asarray(values, dtype=float))[:, None]
        return (np.log(self.weights) - 0.5 * np.log(2 * np.pi * self.variances))[None, :] \
            - 0.5 * (x - self.means[None, :]) ** 2 / self.variances[None, :]

    def responsibilities(self, values, backend=None):
        resp, _ = kernels.gmm_estep(np.atleast_1d(values), self.weights, self.means,
                                    self.variances, backend=backend)
        return resp


def _check_values(values, k):
    x = np.asarray(values, dtype=np.float64).ravel()
    if k < 1:
        raise InputError("k must be >= 1")
    if not np.isfinite(x).all():
        raise InputError("values must be finite")
    if x.size < k:
        raise InputError(f"need at least {k} values, got {x.size}")
    if np.unique(x).size < k:
        raise InputError(f"need at least {k} distinct values to fit {k} components")
    return x


def fit_gmm_1d(values, k=3, max_iter=500, tol=1e-8, seed=0, backend=None) -> Gmm1D:
    """Fit a k-component 1-D Gaussian mixture with EM.

    Means start at the (i + 0.5) / k quantiles, weights uniform, and every
    variance at the sample variance. ``seed`` only matters when quantile
    seeding produces coincident means; those get a tiny seeded jitter.
    Variances are floored at ``1e-6 * (sample variance + 1e-12)``.
    Components are returned sorted by ascending mean.
    """
    x = _check_values(values, k)
    n = x.size
    total_var = float(x.var())
    floor = 1e-6 * (total_var + 1e-12)

    means = np.quantile(x, (np.arange(k) + 0.5) / k)
    if np.unique(means).size < k:
        rng = np.random.default_rng(seed)
        spread = np.sqrt(total_var) * 1e-3
        means = means + np.sort(rng.normal(0.0, spread, size=k))
    weights = np.full(k, 1.0 / k)
    variances = np.full(k, max(total_var, floor))

    history = []
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resp, ll = kernels.gmm_estep(x, weights, means, variances, backend=backend)
        history.append(ll)
        if abs(ll - prev) < tol:
            converged = True
            break
        prev = ll
        nk = resp.sum(axis=0)
        live = nk > _TINY
        weights = np.maximum(nk / n, _TINY)
        weights /= weights.sum()
        new_means = means.copy()
        new_means[live] = (resp[:, live] * x[:, None]).sum(axis=0) / nk[live]
        means = new_means
        sq = (x[:, None] - means[None, :]) ** 2
        new_var = variances.copy()
        new_var[live] = (resp[:, live] * sq[:, live]).sum(axis=0) / nk[live]
        variances = np.maximum(new_var, floor)
    else:
        # parameters were updated after the last E-step; score them
        _, ll = kernels.gmm_estep(x, weights, means, variances, backend=backend)
        history.append(ll)

    order = np.argsort(means, kind="stable")
    return Gmm1D(k, weights[order], means[order], variances[order], float(history[-1]),
                 n_iter=it, converged=converged, history=history)


def assign_class(model: Gmm1D, value):
    """Index of the component with the largest posterior; ties go to the lower index.

    Accepts a scalar or an array; returns an int or an int array.
    """
    scores = model.log_joint(value)
    labels = np.argmax(scores, axis=1)
    if np.ndim(value) == 0:
        return int(labels[0])
    return labels


def label_centroids(records, model: Gmm1D, transform=None):
    """Copies of ``records`` with ``night_class`` set from their nightlight sums."""
    if not records:
        return []
    vals = np.array([r.nightlight_sum for r in records], dtype=float)
    if transform is not None:
        vals = transform(vals)
    labels = assign_class(model, vals)
    return [dataclasses.replace(r, night_class=int(c)) for r, c in zip(records, labels)]


def log1p_transform(values):
    values = np.asarray(values, dtype=float)
    if np.any(values <= -1):
        raise InputError("log1p transform needs values > -1")
    return np.log1p(values)


def write_gmm(model: Gmm1D) -> str:
    out = io.StringIO()
    out.write(f"k = {model.k}\n")
    for name in ("weights", "means", "variances"):
        out.write(f"{name} = {' '.join(repr(float(v)) for v in getattr(model, name))}\n")
    out.write(f"log_likelihood = {model.log_likelihood!r}\n")
    return out.getvalue()


def read_gmm(stream) -> Gmm1D:
    from .config import parse_key_values

    kv = parse_key_values(stream)
    try:
        k = int(kv["k"])
        arrays = {name: np.array([float(t) for t in kv[name].split()])
                  for name in ("weights", "means", "variances")}
        ll = float(kv["log_likelihood"])
    except KeyError as exc:
        raise InputError(f"model file lacks key {exc.args[0]!r}") from None
    if any(a.size != k for a in arrays.values()):
        raise InputError("model arrays do not match k")
    return Gmm1D(k, arrays["weights"], arrays["means"], arrays["variances"], ll)
