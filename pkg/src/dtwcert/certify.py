"""Certified DTW radii for smoothed detectors.

A certified norm radius r around a window x transfers to a DTW radius
through the envelope slack of x itself: cell (i, k) can move by
delta[i, k] = max(upper - x, x - lower) before incurring any envelope
exceedance, and past that every unit of deviation costs a unit of
exceedance. Cellwise |x' - x| <= delta + exceedance plus Minkowski give

    ||x' - x||_p  <=  ||delta||_p + LB_p(x, x'),

so with e = max(0, r - ||delta||_p) every x' within DTW_p distance e of x
(the lower bound never exceeds DTW) stays inside the certified norm ball
and the smoothed decision cannot change. The bound is tight: pushing every
cell past its far envelope side proportionally to delta reaches norm
||delta||_p + LB exactly, so e is the exact infimum of the lower bound
outside the ball. That sound transfer is what the certification pipeline
emits.

The module also exposes the closed-form quantity sqrt(M^2 + r^2 - R^2) - M
(R the Frobenius norm of delta, M its largest row norm), which is the
exceedance of the single-timestep-overflow perturbation built by
worst_case_witness. It upper-bounds the true infimum (strictly, whenever
more than one timestep carries slack) and is kept as a reference value and
test target, never as an emitted certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Window
from .dtw import Envelope, SlackStats, keogh_envelope, slack_stats
from .errors import DomainError, RadiusInsideSlack, UnsupportedNorm
from .smoothing import (
    ABSTAIN,
    ANOMALY,
    BENIGN,
    ScoreSamples,
    SmoothingConfig,
    certified_l2_radius,
    percentile_bounds,
    sample_scores,
)

__all__ = [
    "CertificationResult",
    "dtw_radius",
    "sound_dtw_radius",
    "worst_case_witness",
    "numeric_infimum_oracle",
    "lp_dtw_radius",
    "certify_window",
    "certify_batch",
    "DENOISERS",
]


def dtw_radius(r: float, stats: SlackStats) -> float:
    """Closed-form transfer under single-timestep overflow geometry.

    Returns 0 for r <= R, else sqrt(M^2 + r^2 - R^2) - M: the envelope
    exceedance of the perturbation that spends the full slack everywhere and
    overflows only at the max-slack timestep (see worst_case_witness).
    Constraint to know: this is an upper bound on the infimum of the lower
    bound outside the r-ball, strict when slack spreads over several
    timesteps, so it is not a sound certificate by itself; certificates use
    sound_dtw_radius.
    """
    if r < 0:
        raise DomainError(f"radius must be nonnegative, got {r}")
    big_r, big_m = stats.total, stats.row_max
    if r <= big_r:
        return 0.0
    if big_m == 0.0:  # zero slack forces R = 0, so e collapses to r
        return r
    return math.sqrt(big_m * big_m + r * r - big_r * big_r) - big_m


def sound_dtw_radius(r: float, stats: SlackStats) -> float:
    """The sound (and tight) l2 transfer: max(0, r - R).

    ||x'-x||_2 <= R + LB_2(x,x') cellwise+Minkowski, and the proportional
    overshoot x + (1 + LB/R) * slack attains equality, so this is exactly
    inf { LB_2(x, x') : ||x - x'||_2 > r }.
    """
    if r < 0:
        raise DomainError(f"radius must be nonnegative, got {r}")
    return max(0.0, r - stats.total)


def _signed_slack(x_vals: np.ndarray, env: Envelope) -> np.ndarray:
    """Slack with the sign of the farther envelope side (+ toward upper)."""
    up = env.upper - x_vals
    down = x_vals - env.lower
    return np.where(up >= down, up, -down)


def worst_case_witness(x: Window, env: Envelope, r: float) -> Window:
    """The slack-spending perturbation at norm distance exactly r.

    Moves every cell to its farther envelope boundary and pushes the timestep
    with the largest slack (ties: smallest index) past the boundary,
    collinearly with its slack row, far enough that ||x - x'|| = r. Its
    envelope exceedance equals the closed-form DTW radius.
    """
    stats = slack_stats(x, env)
    if r <= stats.total:
        raise RadiusInsideSlack(f"r={r} lies inside the slack budget R={stats.total}")
    vals = x.values
    if stats.row_max == 0.0:
        out = vals.copy()
        out[0, 0] += r
        return Window(out, origin_index=x.origin_index)
    signed = _signed_slack(vals, env)
    row_norms = np.sqrt((stats.delta * stats.delta).sum(axis=1))
    star = int(np.argmax(row_norms))
    big_r, big_m = stats.total, stats.row_max
    lam = -1.0 + math.sqrt(1.0 + (r * r - big_r * big_r) / (big_m * big_m))
    out = vals + signed
    out[star] += lam * signed[star]
    return Window(out, origin_index=x.origin_index)


def numeric_infimum_oracle(x: Window, env: Envelope, r: float, trials: int = 1000) -> float:
    """Descent estimate of the smallest envelope exceedance past radius r.

    Minimizes the l2 exceedance over the sphere of radius r * (1 + 1e-6)
    around x by projected subgradient descent from many starts: random
    directions, greedy slack-filling orders, and every single-row overflow
    allocation. Returns the best value found (an upper bound on the true
    infimum). Test-only.
    """
    vals = x.values
    seq_len, channels = vals.shape
    dim = seq_len * channels
    stats = slack_stats(x, env)
    if r <= stats.total:
        return 0.0
    radius = r * (1.0 + 1e-6)
    signed = _signed_slack(vals, env).ravel()
    upper = env.upper.ravel()
    lower = env.lower.ravel()
    flat = vals.ravel()
    rng = np.random.default_rng(12345)

    iters = 200
    n_random = max(16, trials // 100)
    starts = [rng.standard_normal((n_random, dim))]
    # greedy slack spending in random row orders, remainder on the last rows
    row_norms = np.sqrt((stats.delta * stats.delta).sum(axis=1))
    for _ in range(min(16, max(4, n_random // 4))):
        order = rng.permutation(seq_len)
        v = signed.copy().reshape(seq_len, channels)
        v[order[: seq_len // 2]] *= rng.uniform(0.2, 1.0)
        starts.append(v.ravel()[None, :])
    # the proportional overshoot ray, and one overflow candidate per row
    # (full slack plus the residual on row i)
    if np.any(signed != 0.0):
        starts.append(signed[None, :].copy())
    overflow = np.repeat(signed[None, :], seq_len, axis=0).reshape(seq_len, seq_len, channels)
    residual = math.sqrt(max(radius * radius - stats.total**2, 0.0))
    for i in range(seq_len):
        row = overflow[i, i]
        norm = math.sqrt((row * row).sum())
        if norm > 0:
            overflow[i, i] += residual * row / norm
        else:
            overflow[i, i, 0] += residual
    starts.append(overflow.reshape(seq_len, -1))

    v = np.concatenate(starts, axis=0)

    def project(points):
        norms = np.sqrt((points * points).sum(axis=1, keepdims=True))
        dead = norms[:, 0] == 0.0
        if dead.any():  # zero vectors cannot scale onto the sphere: reseed them
            points[dead, 0] = 1.0
            norms[dead, 0] = 1.0
        points *= radius / norms
        return points

    v = project(v)

    def exceed(points):
        y = flat[None, :] + points
        above = y - upper[None, :]
        below = lower[None, :] - y
        return np.where(above > 0, above, 0.0) - np.where(below > 0, below, 0.0)

    step = radius / 4.0
    for _ in range(iters):
        exc = exceed(v)
        grad = exc  # gradient of 0.5 * ||exceedance||^2
        gn = np.sqrt((grad * grad).sum(axis=1, keepdims=True))
        gn[gn == 0] = 1.0
        v -= step * grad / gn
        v = project(v)
        step *= 0.97
    exc = exceed(v)
    best = float(np.sqrt((exc * exc).sum(axis=1)).min())
    return best


def _slack_norm(stats: SlackStats, p) -> float:
    delta = stats.delta
    if p == 2:
        return stats.total
    if p == 1:
        return float(delta.sum())
    if p == math.inf or p == "inf":
        return float(delta.max()) if delta.size else 0.0
    raise UnsupportedNorm(p)


def lp_dtw_radius(r: float, x: Window, env: Envelope, p) -> float:
    """Sound norm-to-DTW transfer for p in {1, 2, inf}.

    Any perturbation obeys |x' - x| <= delta + exceedance cellwise, so
    ||x' - x||_p <= ||delta||_p + LB_p by the triangle inequality, and
    e_p = max(0, r - ||delta||_p) is a sound certified DTW radius (the
    proportional overshoot attains it, so it is also the exact infimum).
    Coincides with sound_dtw_radius at p = 2.
    """
    if r < 0:
        raise DomainError(f"radius must be nonnegative, got {r}")
    stats = slack_stats(x, env)
    return max(0.0, r - _slack_norm(stats, p))


# ---------------------------------------------------------------------------
# Per-window pipeline
# ---------------------------------------------------------------------------

def _moving_average3(batch: np.ndarray) -> np.ndarray:
    """Centered width-3 moving average along the time axis, clamped ends."""
    out = batch.copy()
    if batch.shape[-2] < 3:
        return out
    out[..., 1:-1, :] = (batch[..., :-2, :] + batch[..., 1:-1, :] + batch[..., 2:, :]) / 3.0
    return out


DENOISERS = {
    "identity": None,
    "moving-average": _moving_average3,
}


class _DenoisedScorer:
    """Wraps a scorer so noisy inputs pass through a denoiser before scoring."""

    def __init__(self, score_fn, denoise):
        self._score_fn = score_fn
        self._denoise = denoise
        self.reentrant = getattr(score_fn, "reentrant", False)

    def __call__(self, window_values):
        return self._score_fn(self._denoise(window_values))

    def score_many(self, batch):
        inner = getattr(self._score_fn, "score_many", None)
        cleaned = self._denoise(batch)
        if inner is not None:
            return inner(cleaned)
        return np.array([self._score_fn(row) for row in cleaned])


@dataclass(frozen=True)
class CertificationResult:
    decision: str  # anomaly / benign / abstain
    l2_radius: float
    dtw_radius: float
    slack_total: float  # R
    slack_row_max: float  # M
    q_lo: int
    q_hi: int
    origin_index: int
    point_decision: str  # plug-in percentile decision, defined even on abstain
    smoothed_score: float  # empirical percentile of the sampled scores
    config: SmoothingConfig
    warp_window: int
    conservative_transfer: bool = False

    @property
    def abstained(self) -> bool:
        return self.decision == ABSTAIN


def certify_window(
    x: Window,
    score_fn,
    cfg: SmoothingConfig,
    w: int,
    gamma: float,
    denoiser: str = "identity",
    samples: ScoreSamples | None = None,
) -> CertificationResult:
    """Sample, decide, and certify one window.

    Pipeline: noisy scores (optionally denoised before scoring) feed the
    confident decision and norm radius; the window's own envelope slack then
    converts the norm radius into the DTW radius e = max(0, r - ||slack||_p)
    for the noise's matching norm. With probability at least 1 - alpha,
    every x' within DTW_p distance e (same warp window) keeps the returned
    decision. Passing precomputed samples (from the same scorer,
    window and config) skips the sampling step; draws are substream-keyed so
    the result is identical either way.
    """
    if samples is None:
        denoise = DENOISERS[denoiser]
        effective = score_fn if denoise is None else _DenoisedScorer(score_fn, denoise)
        samples = sample_scores(effective, x, cfg)
    decision, r = certified_l2_radius(samples, gamma, cfg)
    env = keogh_envelope(x, w)
    stats = slack_stats(x, env)
    norm_p = cfg.noise_kind.norm_p
    if decision == ABSTAIN:
        e = 0.0
    else:
        e = lp_dtw_radius(r, x, env, norm_p)
    at_zero = percentile_bounds(samples, cfg.percentile_p, 0.0, cfg.alpha)
    emp = samples.empirical_percentile()
    return CertificationResult(
        decision=decision,
        l2_radius=r,
        dtw_radius=e,
        slack_total=stats.total,
        slack_row_max=stats.row_max,
        q_lo=at_zero.q_lo,
        q_hi=at_zero.q_hi,
        origin_index=x.origin_index,
        point_decision=ANOMALY if emp > gamma else BENIGN,
        smoothed_score=emp,
        config=cfg,
        warp_window=w,
        conservative_transfer=norm_p != 2,
    )


def certify_batch(
    windows,
    score_fn,
    cfg: SmoothingConfig,
    w: int,
    gamma: float,
    denoiser: str = "identity",
    workers: int = 1,
) -> list[CertificationResult]:
    """Certify many windows; results come back in origin_index order.

    Fans out across a thread pool only when the scorer declares itself
    reentrant; per-window noise substreams keep the output independent of
    scheduling.
    """
    windows = sorted(windows, key=lambda win: win.origin_index)
    if workers > 1 and getattr(score_fn, "reentrant", False):
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(
                pool.map(
                    lambda win: certify_window(win, score_fn, cfg, w, gamma, denoiser),
                    windows,
                )
            )
    return [certify_window(win, score_fn, cfg, w, gamma, denoiser) for win in windows]
