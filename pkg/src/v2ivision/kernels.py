"""Hot inner loops, each in a numba and a numpy flavour.

The public names (``im2col``, ``col2im``, ``windowed_mean``,
``rasterize_convex``, ``nearest_within``) are bound to one flavour at import
time, see :mod:`v2ivision._accel`. Both flavours are always importable under
``*_numba`` / ``*_numpy`` so tests and the benchmark can compare them.

Layout conventions
------------------
Images are channels-last, ``(N, H, W, C)``. Patch columns are ordered
``(a, b, c)`` with ``a`` the kernel row and ``b`` the kernel column, so a
convolution weight reshapes to ``(k * k * C, F)`` and the channel run of each
tap is contiguous in memory.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import HAS_NUMBA, USE_NUMBA, njit


def conv_out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


# --------------------------------------------------------------------------
# im2col / col2im


def im2col_numpy(x, k, stride, pad):
    n, h, w, c = x.shape
    ho = conv_out_size(h, k, stride, pad)
    wo = conv_out_size(w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    if k == 1:
        return np.ascontiguousarray(x[:, : stride * ho : stride, : stride * wo : stride, :])
    view = sliding_window_view(x, (k, k), axis=(1, 2))[:, : stride * ho : stride, : stride * wo : stride]
    return view.transpose(0, 1, 2, 4, 5, 3).reshape(n, ho, wo, k * k * c)


def col2im_numpy(cols, x_shape, k, stride, pad):
    n, h, w, c = x_shape
    ho, wo = cols.shape[1], cols.shape[2]
    cols = cols.reshape(n, ho, wo, k, k, c)
    dx = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    for a in range(k):
        for b in range(k):
            dx[:, a : a + stride * ho : stride, b : b + stride * wo : stride, :] += cols[:, :, :, a, b, :]
    if pad:
        dx = dx[:, pad : pad + h, pad : pad + w, :]
    return np.ascontiguousarray(dx)


@njit
def _im2col_nb(x, k, stride, pad, ho, wo):
    n, h, w, c = x.shape
    out = np.empty((n, ho, wo, k * k * c), dtype=x.dtype)
    for s in range(n):
        for i in range(ho):
            for a in range(k):
                r = i * stride + a - pad
                for j in range(wo):
                    for b in range(k):
                        q = j * stride + b - pad
                        base = (a * k + b) * c
                        if r < 0 or r >= h or q < 0 or q >= w:
                            for ch in range(c):
                                out[s, i, j, base + ch] = 0
                        else:
                            for ch in range(c):
                                out[s, i, j, base + ch] = x[s, r, q, ch]
    return out


@njit
def _col2im_nb(cols, n, h, w, c, k, stride, pad):
    ho, wo = cols.shape[1], cols.shape[2]
    dx = np.zeros((n, h, w, c), dtype=cols.dtype)
    for s in range(n):
        for i in range(ho):
            for j in range(wo):
                for a in range(k):
                    r = i * stride + a - pad
                    if r < 0 or r >= h:
                        continue
                    for b in range(k):
                        q = j * stride + b - pad
                        if q < 0 or q >= w:
                            continue
                        base = (a * k + b) * c
                        for ch in range(c):
                            dx[s, r, q, ch] += cols[s, i, j, base + ch]
    return dx


def im2col_numba(x, k, stride, pad):
    h, w = x.shape[1], x.shape[2]
    return _im2col_nb(
        np.ascontiguousarray(x), k, stride, pad, conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    )


def col2im_numba(cols, x_shape, k, stride, pad):
    n, h, w, c = x_shape
    return _col2im_nb(np.ascontiguousarray(cols), n, h, w, c, k, stride, pad)


# --------------------------------------------------------------------------
# centred, boundary-truncated sliding mean along axis 0


def _window_bounds(n, span):
    start = np.arange(n) - span // 2
    stop = start + span
    return np.clip(start, 0, n), np.clip(stop, 0, n)


def windowed_mean_numpy(x, weights, span):
    """Mean of rows ``x[j]`` over the window of each row, rows weighted 0/1.

    Rows whose window holds no weight come back as NaN.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    wts = np.asarray(weights, dtype=np.float64)
    n = x.shape[0]
    lo, hi = _window_bounds(n, span)
    cx = np.zeros((n + 1, x.shape[1]))
    np.cumsum(x * wts[:, None], axis=0, out=cx[1:])
    cw = np.zeros(n + 1)
    np.cumsum(wts, out=cw[1:])
    num = cx[hi] - cx[lo]
    den = cw[hi] - cw[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den[:, None] > 0, num / np.where(den > 0, den, 1.0)[:, None], np.nan)
    return out[:, 0] if squeeze else out


@njit
def _windowed_mean_nb(x, wts, span):
    n, m = x.shape
    out = np.empty((n, m))
    acc = np.empty(m)
    for i in range(n):
        lo = max(i - span // 2, 0)
        hi = min(i - span // 2 + span, n)
        acc[:] = 0.0
        den = 0.0
        for j in range(lo, hi):
            if wts[j] != 0.0:
                den += wts[j]
                for q in range(m):
                    acc[q] += wts[j] * x[j, q]
        for q in range(m):
            out[i, q] = acc[q] / den if den > 0.0 else np.nan
    return out


def windowed_mean_numba(x, weights, span):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = np.ascontiguousarray(x[:, None] if squeeze else x)
    out = _windowed_mean_nb(x2, np.asarray(weights, dtype=np.float64), int(span))
    return out[:, 0] if squeeze else out


# --------------------------------------------------------------------------
# convex polygon fill: a cell is set when its centre lies inside the polygon


def rasterize_convex_numpy(poly, height, width):
    """``poly`` is ``(P, 2)`` of (column, row) vertices in counter-clockwise
    order (image axes, row down). Returns a bool ``(height, width)`` grid."""
    grid = np.zeros((height, width), dtype=bool)
    c0 = max(int(np.floor(poly[:, 0].min() - 0.5)), 0)
    c1 = min(int(np.ceil(poly[:, 0].max() - 0.5)), width - 1)
    r0 = max(int(np.floor(poly[:, 1].min() - 0.5)), 0)
    r1 = min(int(np.ceil(poly[:, 1].max() - 0.5)), height - 1)
    if c1 < c0 or r1 < r0:
        return grid
    cx = np.arange(c0, c1 + 1) + 0.5
    cy = np.arange(r0, r1 + 1) + 0.5
    px, py = np.meshgrid(cx, cy)
    inside = np.ones(px.shape, dtype=bool)
    nxt = np.roll(poly, -1, axis=0)
    for (x0, y0), (x1, y1) in zip(poly, nxt):
        inside &= (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) >= 0.0
    grid[r0 : r1 + 1, c0 : c1 + 1] = inside
    return grid


@njit
def _rasterize_nb(poly, height, width):
    grid = np.zeros((height, width), dtype=np.bool_)
    p = poly.shape[0]
    c0 = max(int(np.floor(poly[:, 0].min() - 0.5)), 0)
    c1 = min(int(np.ceil(poly[:, 0].max() - 0.5)), width - 1)
    r0 = max(int(np.floor(poly[:, 1].min() - 0.5)), 0)
    r1 = min(int(np.ceil(poly[:, 1].max() - 0.5)), height - 1)
    for r in range(r0, r1 + 1):
        py = r + 0.5
        for c in range(c0, c1 + 1):
            px = c + 0.5
            ok = True
            for e in range(p):
                x0 = poly[e, 0]
                y0 = poly[e, 1]
                x1 = poly[(e + 1) % p, 0]
                y1 = poly[(e + 1) % p, 1]
                if (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) < 0.0:
                    ok = False
                    break
            grid[r, c] = ok
    return grid


def rasterize_convex_numba(poly, height, width):
    return _rasterize_nb(np.ascontiguousarray(poly, dtype=np.float64), int(height), int(width))


# --------------------------------------------------------------------------
# nearest neighbour in a sorted reference stream, ties to the earlier entry


def nearest_within_numpy(query, ref, tol):
    """For each sorted ``query`` time, index of the nearest ``ref`` time when
    the gap is ``<= tol``, else -1."""
    query = np.asarray(query, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    out = np.full(query.shape, -1, dtype=np.int64)
    if ref.size == 0 or query.size == 0:
        return out
    right = np.searchsorted(ref, query, side="left")
    left = np.clip(right - 1, 0, ref.size - 1)
    right_c = np.clip(right, 0, ref.size - 1)
    dl = np.abs(ref[left] - query)
    dr = np.abs(ref[right_c] - query)
    best = np.where(dl <= dr, left, right_c)
    gap = np.minimum(dl, dr)
    ok = gap <= tol
    out[ok] = best[ok]
    return out


@njit
def _nearest_within_nb(query, ref, tol):
    nq = query.shape[0]
    nr = ref.shape[0]
    out = np.full(nq, -1, dtype=np.int64)
    if nr == 0:
        return out
    j = 0
    for i in range(nq):
        t = query[i]
        while j + 1 < nr and ref[j + 1] < t:
            j += 1
        best = j
        gap = abs(ref[j] - t)
        if j + 1 < nr:
            g2 = abs(ref[j + 1] - t)
            if g2 < gap:
                best = j + 1
                gap = g2
        if gap <= tol:
            out[i] = best
    return out


def nearest_within_numba(query, ref, tol):
    return _nearest_within_nb(
        np.ascontiguousarray(query, dtype=np.float64), np.ascontiguousarray(ref, dtype=np.float64), float(tol)
    )


if USE_NUMBA:
    im2col, col2im = im2col_numba, col2im_numba
    windowed_mean = windowed_mean_numba
    rasterize_convex = rasterize_convex_numba
    nearest_within = nearest_within_numba
else:
    im2col, col2im = im2col_numpy, col2im_numpy
    windowed_mean = windowed_mean_numpy
    rasterize_convex = rasterize_convex_numpy
    nearest_within = nearest_within_numpy

IMPLEMENTATIONS = {
    "im2col": (im2col_numpy, im2col_numba if HAS_NUMBA else None),
    "col2im": (col2im_numpy, col2im_numba if HAS_NUMBA else None),
    "windowed_mean": (windowed_mean_numpy, windowed_mean_numba if HAS_NUMBA else None),
    "rasterize_convex": (rasterize_convex_numpy, rasterize_convex_numba if HAS_NUMBA else None),
    "nearest_within": (nearest_within_numpy, nearest_within_numba if HAS_NUMBA else None),
}
