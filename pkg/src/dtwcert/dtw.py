"""Banded DTW distance, Keogh envelopes, the Keogh lower bound and slack stats.

The distance between two (T, C) windows under norm order p is

    min over admissible paths pi of ( sum_{(i,j) in pi} ||x_i - x2_j||_p^p )^(1/p)

where paths start at (0, 0), end at (T-1, T-1), move by (i+1, j), (i, j+1) or
(i+1, j+1), and stay inside the Sakoe-Chiba band |i - j| <= w. Per-cell cost is
the channel-wise p-norm (dependent DTW). The l-infinity variant aggregates the
path by max instead of a sum.

The envelope of a window is its running max/min over the clamped index range
[i-w, i+w]; the lower bound is the aggregate exceedance of a second window
outside that band, using absolute exceedances for every p so the bound stays
below DTW for odd norm orders too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import Window
from .errors import EnvelopeMismatch, InvalidWindow, ShapeMismatch, UnsupportedNorm

__all__ = [
    "Envelope",
    "SlackStats",
    "dtw_distance",
    "keogh_envelope",
    "keogh_lower_bound",
    "slack_stats",
    "norm_code",
]


def norm_code(p) -> int:
    """Map a norm order (1, 2, inf or 'inf') to the kernel p-code."""
    if p == 1:
        return 1
    if p == 2:
        return 2
    if p == math.inf or p == "inf":
        return 0
    raise UnsupportedNorm(p)


def _values(x) -> np.ndarray:
    if isinstance(x, Window):
        return x.values
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


@dataclass(frozen=True)
class Envelope:
    """Per-timestep, per-channel upper/lower bands of a reference window."""

    upper: np.ndarray
    lower: np.ndarray
    window_w: int
    source: Window

    def __post_init__(self):
        self.upper.setflags(write=False)
        self.lower.setflags(write=False)


@dataclass(frozen=True)
class SlackStats:
    """Allowable zero-penalty deviation per cell and its aggregates.

    delta[i, k] = max(upper - x, x - lower); total is the Euclidean norm of
    the per-timestep row norms of delta; row_max the largest row norm.
    """

    delta: np.ndarray
    total: float
    row_max: float

    def __post_init__(self):
        self.delta.setflags(write=False)


def dtw_distance(x, x2, w: int, p=2) -> float:
    """Banded DTW distance between two equal-shape windows. O(T * w * C)."""
    a, b = _values(x), _values(x2)
    if a.shape != b.shape:
        raise ShapeMismatch(f"window shapes differ: {a.shape} vs {b.shape}")
    seq_len = a.shape[0]
    if not 1 <= w <= seq_len:
        raise InvalidWindow(f"warp window {w} outside [1, {seq_len}]")
    return kernels.band_dtw(a, b, int(w), norm_code(p))


def keogh_envelope(x, w: int) -> Envelope:
    """Running max/min envelope of x over the clamped range [i-w, i+w]."""
    source = x if isinstance(x, Window) else Window(_values(x))
    vals = source.values
    if not 1 <= w <= vals.shape[0]:
        raise InvalidWindow(f"warp window {w} outside [1, {vals.shape[0]}]")
    upper, lower = kernels.envelope(vals, int(w))
    return Envelope(upper=upper, lower=lower, window_w=int(w), source=source)


def keogh_lower_bound(env: Envelope, x2, p=2) -> float:
    """Aggregate exceedance of x2 outside [env.lower, env.upper]; <= DTW."""
    b = _values(x2)
    if b.shape != env.upper.shape:
        raise ShapeMismatch(f"query shape {b.shape} does not match envelope {env.upper.shape}")
    return kernels.lb_keogh(env.upper, env.lower, b, norm_code(p))


def slack_stats(x, env: Envelope) -> SlackStats:
    """Per-cell slack delta = max(upper - x, x - lower) and its aggregates."""
    vals = _values(x)
    if not np.array_equal(env.source.values, vals):
        raise EnvelopeMismatch("envelope was built from a different window")
    delta = np.maximum(env.upper - vals, vals - env.lower)
    row_norms = np.sqrt((delta * delta).sum(axis=1))
    return SlackStats(
        delta=delta,
        total=float(np.sqrt((row_norms * row_norms).sum())),
        row_max=float(row_norms.max()),
    )
