"""Numpy fallback kernels: banded DTW, Keogh envelopes, envelope exceedance.

Same call signatures and the same arithmetic as the compiled kernels in
``_ckern``: per-cell costs reduce channels in ascending order, the DP
accumulates left to right along the alignment path, and no fast-math style
reassociation is applied, so both backends agree bit for bit on the grids the
oracle tests enumerate.

``p_code`` is 1 for the l1 norm, 2 for l2, 0 for l-infinity (max aggregation
along the path instead of a sum).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["band_dtw", "envelope", "lb_keogh"]


def _cell_costs(a, b, p_code):
    diff = a[:, None, :] - b[None, :, :]
    if p_code == 2:
        return (diff * diff).sum(axis=2)
    if p_code == 1:
        return np.abs(diff).sum(axis=2)
    return np.abs(diff).max(axis=2)


def band_dtw(a, b, w, p_code):
    """DTW between (T, C) arrays under the |i-j| <= w band constraint.

    Dynamic program over anti-diagonals: every cell on diagonal d depends only
    on diagonals d-1 and d-2, so each diagonal updates in one vector op.
    """
    T = a.shape[0]
    cost = _cell_costs(a, b, p_code)
    idx = np.arange(T)
    cost[np.abs(idx[:, None] - idx[None, :]) > w] = np.inf

    inf = np.inf
    prev = np.full(T, inf)  # diagonal d-1, indexed by i
    prev2 = np.full(T, inf)  # diagonal d-2
    prev[0] = cost[0, 0]
    shifted = np.empty(T)
    shifted2 = np.empty(T)
    for d in range(1, 2 * T - 1):
        lo = max(0, d - T + 1)
        hi = min(d, T - 1)
        shifted[0] = inf
        shifted[1:] = prev[:-1]  # predecessor (i-1, j)
        shifted2[0] = inf
        shifted2[1:] = prev2[:-1]  # predecessor (i-1, j-1)
        best = np.minimum(np.minimum(shifted, prev), shifted2)
        cur = np.full(T, inf)
        ii = np.arange(lo, hi + 1)
        c = cost[ii, d - ii]
        if p_code == 0:
            cur[lo : hi + 1] = np.maximum(c, best[lo : hi + 1])
        else:
            cur[lo : hi + 1] = c + best[lo : hi + 1]
        prev2, prev = prev, cur
    total = prev[T - 1]
    if p_code == 2:
        return float(np.sqrt(total))
    return float(total)


def envelope(x, w):
    """Running extrema of x over the clamped index window [i-w, i+w]."""
    width = 2 * w + 1
    hi = np.pad(x, ((w, w), (0, 0)), constant_values=-np.inf)
    lo = np.pad(x, ((w, w), (0, 0)), constant_values=np.inf)
    upper = sliding_window_view(hi, width, axis=0).max(axis=-1)
    lower = sliding_window_view(lo, width, axis=0).min(axis=-1)
    return np.ascontiguousarray(upper), np.ascontiguousarray(lower)


def lb_keogh(upper, lower, b, p_code):
    """Aggregate exceedance of b outside the [lower, upper] band."""
    above = b - upper
    below = lower - b
    exc = np.where(above > 0.0, above, np.where(below > 0.0, below, 0.0))
    if p_code == 2:
        return float(np.sqrt((exc * exc).sum()))
    if p_code == 1:
        return float(exc.sum())
    return float(exc.max()) if exc.size else 0.0
