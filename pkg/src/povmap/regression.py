"""Standardized closed-form ridge regression with k-fold cross-validation."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .config import default_lambda_grid, parse_key_values
from .errors import InputError


@dataclass
class RidgeModel:
    weights: np.ndarray        # coefficients on standardized columns
    intercept: float
    lam: float
    column_means: np.ndarray
    column_stds: np.ndarray    # 1.0 for constant columns

    @property
    def d(self):
        return self.weights.size

    def standardize(self, X):
        return (X - self.column_means) / self.column_stds


@dataclass
class EvalMetrics:
    r_squared: float
    rmse: float
    n: int


def _as_design(X, y=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError("X must be two-dimensional")
    if not np.isfinite(X).all():
        raise InputError("X contains non-finite entries")
    if y is None:
        return X
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != X.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but y has {y.size}")
    if not np.isfinite(y).all():
        raise InputError("y contains non-finite entries")
    return X, y


def standardization(X):
    """Column means and population stds; constant columns get std 1."""
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    constant = np.ptp(X, axis=0) == 0
    stds[constant] = 1.0
    return means, stds, constant


def ridge_fit(X, y, lam) -> RidgeModel:
    """Solve ``(Z'Z + lam I) w = Z'(y - mean(y))`` on standardized columns ``Z``.

    The intercept is not penalized. Constant columns get weight 0.
    """
    X, y = _as_design(X, y)
    n, d = X.shape
    if n < 2:
        raise InputError("ridge needs at least 2 samples")
    if d < 1:
        raise InputError("ridge needs at least 1 feature")
    if not lam >= 0:
        raise InputError("lambda must be non-negative")
    means, stds, constant = standardization(X)
    Z = (X - means) / stds
    y_mean = y.mean()
    active = ~constant
    weights = np.zeros(d)
    if active.any():
        Za = Z[:, active]
        if lam == 0 and np.linalg.matrix_rank(Za) < Za.shape[1]:
            raise InputError("collinear columns make the lambda=0 system singular; use lambda > 0")
        gram = Za.T @ Za + lam * np.eye(Za.shape[1])
        try:
            weights[active] = linalg.cho_solve(linalg.cho_factor(gram), Za.T @ (y - y_mean))
        except linalg.LinAlgError:
            raise InputError("ridge system is singular; use lambda > 0") from None
    return RidgeModel(weights, float(y_mean), float(lam), means, stds)


def predict(model: RidgeModel, X):
    X = _as_design(X)
    if X.shape[1] != model.d:
        raise InputError(f"model expects {model.d} columns, got {X.shape[1]}")
    return model.standardize(X) @ model.weights + model.intercept


def r_squared(y, y_hat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size != y_hat.size:
        raise InputError("length mismatch")
    if y.size < 2:
        raise InputError("r-squared needs at least 2 values")
    ss_tot = ((y - y.mean()) ** 2).sum()
    if ss_tot == 0:
        raise InputError("r-squared undefined for a constant target")
    return float(1.0 - ((y - y_hat) ** 2).sum() / ss_tot)


def rmse(y, y_hat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size != y_hat.size:
        raise InputError("length mismatch")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def evaluate(model, X, y) -> EvalMetrics:
    y_hat = predict(model, X)
    return EvalMetrics(r_squared(y, y_hat), rmse(y, y_hat), len(y_hat))


# -- cross-validation -----------------------------------------------------

def kfold_indices(n, k, seed=0):
    """Seeded shuffle split into ``k`` folds whose sizes differ by at most one."""
    if k < 2:
        raise InputError("k must be >= 2")
    if k > n:
        raise InputError(f"k={k} folds exceed n={n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class CVResult:
    folds: list
    lambda_grid: list
    mean_r2_by_lambda: list
    best_lambda: float
    fold_metrics: list = field(default_factory=list)

    @property
    def mean_r2(self):
        return float(np.mean([m.r_squared for m in self.fold_metrics]))

    @property
    def mean_rmse(self):
        return float(np.mean([m.rmse for m in self.fold_metrics]))

    def summary_lines(self):
        lines = [f"best_lambda={self.best_lambda!r}", f"mean_r2={self.mean_r2:.6f}",
                 f"mean_rmse={self.mean_rmse:.6f}"]
        for i, m in enumerate(self.fold_metrics):
            lines.append(f"fold{i}.r2={m.r_squared:.6f}")
            lines.append(f"fold{i}.rmse={m.rmse:.6f}")
            lines.append(f"fold{i}.n={m.n}")
        for lam, r2 in zip(self.lambda_grid, self.mean_r2_by_lambda):
            lines.append(f"grid.{lam!r}.mean_r2={r2:.6f}")
        return lines


def kfold_cv(X, y, k=5, lambda_grid=None, seed=0) -> CVResult:
    """Pick lambda by mean validation r-squared over k folds (ties go to the smaller)."""
    X, y = _as_design(X, y)
    grid = sorted(default_lambda_grid() if lambda_grid is None else lambda_grid)
    if not grid:
        raise InputError("lambda grid is empty")
    folds = kfold_indices(len(y), k, seed)
    per_lambda = []
    for lam in grid:
        metrics = []
        for fold in folds:
            train = np.ones(len(y), dtype=bool)
            train[fold] = False
            model = ridge_fit(X[train], y[train], lam)
            metrics.append(evaluate(model, X[fold], y[fold]))
        per_lambda.append(metrics)
    means = [float(np.mean([m.r_squared for m in ms])) for ms in per_lambda]
    best = int(np.argmax(means))  # first maximum is the smallest lambda
    return CVResult(folds, grid, means, grid[best], per_lambda[best])


# -- persistence ----------------------------------------------------------

def _vec(a):
    return " ".join(repr(float(v)) for v in a)


def write_model(model: RidgeModel) -> str:
    out = io.StringIO()
    out.write(f"lambda = {model.lam!r}\n")
    out.write(f"intercept = {model.intercept!r}\n")
    out.write(f"weights = {_vec(model.weights)}\n")
    out.write(f"column_means = {_vec(model.column_means)}\n")
    out.write(f"column_stds = {_vec(model.column_stds)}\n")
    return out.getvalue()


def read_model(stream) -> RidgeModel:
    kv = parse_key_values(stream)
    try:
        arrays = [np.array([float(t) for t in kv[k].split()])
                  for k in ("weights", "column_means", "column_stds")]
        model = RidgeModel(arrays[0], float(kv["intercept"]), float(kv["lambda"]),
                           arrays[1], arrays[2])
    except KeyError as exc:
        raise InputError(f"model file lacks key {exc.args[0]!r}") from None
    if not (arrays[0].size == arrays[1].size == arrays[2].size):
        raise InputError("model vectors differ in length")
    return model
