"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public wrappers take an optional ``backend`` argument; when omitted the
backend comes from :func:`povmap._accel.default_backend`.
"""
import math

import numpy as np

from ._accel import njit, resolve

EDGE_EPS = 1e-12
_CHUNK = 1 << 15


# -- point in ring --------------------------------------------------------

@njit(cache=True)
def _points_in_ring_nb(xs, ys, rx, ry, eps):
    n = xs.shape[0]
    m = rx.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for p in range(n):
        px = xs[p]
        py = ys[p]
        inside = False
        on_edge = False
        j = m - 1
        for i in range(m):
            x1 = rx[j]
            y1 = ry[j]
            x2 = rx[i]
            y2 = ry[i]
            cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
            if (abs(cross) <= eps
                    and min(x1, x2) - eps <= px <= max(x1, x2) + eps
                    and min(y1, y2) - eps <= py <= max(y1, y2) + eps):
                on_edge = True
                break
            if (y1 > py) != (y2 > py):
                xcross = (x2 - x1) * (py - y1) / (y2 - y1) + x1
                if px < xcross:
                    inside = not inside
            j = i
        out[p] = on_edge or inside
    return out


def _points_in_ring_np(xs, ys, rx, ry, eps):
    x1 = np.roll(rx, 1)[None, :]
    y1 = np.roll(ry, 1)[None, :]
    x2 = rx[None, :]
    y2 = ry[None, :]
    out = np.empty(xs.shape[0], dtype=bool)
    for start in range(0, xs.shape[0], _CHUNK):
        px = xs[start:start + _CHUNK, None]
        py = ys[start:start + _CHUNK, None]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        on_edge = (
            (np.abs(cross) <= eps)
            & (px >= np.minimum(x1, x2) - eps) & (px <= np.maximum(x1, x2) + eps)
            & (py >= np.minimum(y1, y2) - eps) & (py <= np.maximum(y1, y2) + eps)
        ).any(axis=1)
        straddle = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = (x2 - x1) * (py - y1) / (y2 - y1) + x1
        crossings = (straddle & (px < xcross)).sum(axis=1)
        out[start:start + _CHUNK] = on_edge | (crossings % 2 == 1)
    return out


def points_in_ring(xs, ys, ring, eps=EDGE_EPS, backend=None):
    """Even-odd containment of many points in one ring; edges count as inside."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    ring = np.asarray(ring, dtype=np.float64)
    rx = np.ascontiguousarray(ring[:, 0])
    ry = np.ascontiguousarray(ring[:, 1])
    if resolve(backend) == "numba":
        return _points_in_ring_nb(xs, ys, rx, ry, float(eps))
    return _points_in_ring_np(xs, ys, rx, ry, float(eps))


# -- footprint sums -------------------------------------------------------

@njit(cache=True)
def _footprint_sums_nb(grid, xll, yll, cs, bounds):
    nrows, ncols = grid.shape
    m = bounds.shape[0]
    out = np.zeros(m)
    for f in range(m):
        lo_x = bounds[f, 0]
        hi_x = bounds[f, 1]
        lo_y = bounds[f, 2]
        hi_y = bounds[f, 3]
        c0 = max(0, int(math.floor((lo_x - xll) / cs - 0.5)))
        c1 = min(ncols - 1, int(math.ceil((hi_x - xll) / cs - 0.5)))
        r0 = max(0, int(math.floor(nrows - 0.5 - (hi_y - yll) / cs)))
        r1 = min(nrows - 1, int(math.ceil(nrows - 0.5 - (lo_y - yll) / cs)))
        total = 0.0
        for r in range(r0, r1 + 1):
            lat = yll + (nrows - r - 0.5) * cs
            if lat < lo_y or lat > hi_y:
                continue
            for c in range(c0, c1 + 1):
                lon = xll + (c + 0.5) * cs
                if lon < lo_x or lon > hi_x:
                    continue
                total += grid[r, c]
        out[f] = total
    return out


def _footprint_sums_np(grid, xll, yll, cs, bounds):
    nrows, ncols = grid.shape
    lon_c = xll + (np.arange(ncols) + 0.5) * cs
    lat_c = yll + (nrows - np.arange(nrows) - 0.5) * cs
    out = np.zeros(bounds.shape[0])
    for f, (lo_x, hi_x, lo_y, hi_y) in enumerate(bounds):
        cols = np.flatnonzero((lon_c >= lo_x) & (lon_c <= hi_x))
        rows = np.flatnonzero((lat_c >= lo_y) & (lat_c <= hi_y))
        if cols.size and rows.size:
            out[f] = grid[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].sum()
    return out


def footprint_sums(grid, xll, yll, cellsize, bounds, backend=None):
    """Sum grid cells whose centers fall inside each (min_lon, max_lon, min_lat, max_lat) box.

    ``grid`` must already have nodata cells replaced by zero. Bounds are
    inclusive on all four sides.
    """
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    bounds = np.ascontiguousarray(np.reshape(bounds, (-1, 4)), dtype=np.float64)
    if resolve(backend) == "numba":
        return _footprint_sums_nb(grid, float(xll), float(yll), float(cellsize), bounds)
    return _footprint_sums_np(grid, float(xll), float(yll), float(cellsize), bounds)


# -- gaussian mixture E-step ----------------------------------------------

@njit(cache=True)
def _gmm_estep_nb(x, weights, means, variances):
    n = x.shape[0]
    k = means.shape[0]
    resp = np.empty((n, k))
    consts = np.empty(k)
    for j in range(k):
        consts[j] = math.log(weights[j]) - 0.5 * math.log(2.0 * math.pi * variances[j])
    total = 0.0
    for i in range(n):
        top = -np.inf
        for j in range(k):
            d = x[i] - means[j]
            v = consts[j] - 0.5 * d * d / variances[j]
            resp[i, j] = v
            if v > top:
                top = v
        s = 0.0
        for j in range(k):
            s += math.exp(resp[i, j] - top)
        lse = top + math.log(s)
        for j in range(k):
            resp[i, j] = math.exp(resp[i, j] - lse)
        total += lse
    return resp, total


def _gmm_estep_np(x, weights, means, variances):
    d = x[:, None] - means[None, :]
    logp = (np.log(weights) - 0.5 * np.log(2.0 * np.pi * variances))[None, :] \
        - 0.5 * d * d / variances[None, :]
    top = logp.max(axis=1, keepdims=True)
    lse = top + np.log(np.exp(logp - top).sum(axis=1, keepdims=True))
    return np.exp(logp - lse), float(lse.sum())


def gmm_estep(x, weights, means, variances, backend=None):
    """Posterior responsibilities (n, k) and total log-likelihood."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (x, weights, means, variances)]
    if resolve(backend) == "numba":
        resp, ll = _gmm_estep_nb(*args)
        return resp, float(ll)
    return _gmm_estep_np(*args)


# -- IoU ------------------------------------------------------------------

@njit(cache=True)
def _iou_matrix_nb(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
        for j in range(m):
            iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
            ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
            if iw <= 0.0 or ih <= 0.0:
                continue
            inter = iw * ih
            area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
            out[i, j] = inter / (area_a + area_b - inter)
    return out


def _iou_matrix_np(a, b):
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(inter > 0, inter / union, 0.0)


def iou_matrix(a, b, backend=None):
    """Pairwise IoU between (n, 4) and (m, 4) arrays of tlx, tly, brx, bry."""
    a = np.ascontiguousarray(np.reshape(a, (-1, 4)), dtype=np.float64)
    b = np.ascontiguousarray(np.reshape(b, (-1, 4)), dtype=np.float64)
    if resolve(backend) == "numba":
        return _iou_matrix_nb(a, b)
    return _iou_matrix_np(a, b)
