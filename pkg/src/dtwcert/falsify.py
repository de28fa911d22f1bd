"""Empirical soundness probe: search for decision flips inside certified balls.

For sampled certified windows, candidate perturbations are scaled (against
exact DTW evaluations) to lie within the certified DTW radius, then
re-decided with a fresh noise seed at the same confidence level. A flip is a
CONFIDENT opposite decision; abstentions are estimation noise, not
violations. Expected flips are at most alpha per probe, so the run hard-fails
only past the 1 - 1e-6 binomial tail of that budget.

The probe families mix isotropic directions (always feasible: an l2 step of
size e cannot exceed DTW e), slack-field rays with a single overflow row, and
small temporal shifts, all pushed toward the budget boundary where violations
would live.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Window
from .certify import DENOISERS, _DenoisedScorer, _signed_slack
from .dtw import dtw_distance, keogh_envelope, slack_stats
from .errors import DomainError
from .smoothing import (
    ABSTAIN,
    ANOMALY,
    BENIGN,
    SmoothingConfig,
    binomial_cdf,
    percentile_bounds,
    sample_scores,
)

__all__ = ["FalsifyReport", "falsify_windows", "flip_fail_threshold"]

_MASK64 = (1 << 64) - 1


@dataclass
class FalsifyReport:
    probes: int = 0
    flips: int = 0
    abstains: int = 0
    examined_windows: int = 0
    skipped_windows: int = 0  # zero-radius or abstained results
    flip_threshold: int = 0
    failed: bool = False
    flip_details: list = field(default_factory=list)


def flip_fail_threshold(probes: int, alpha: float, tail: float = 1e-6) -> int:
    """Smallest count whose exceedance probability under Bin(probes, alpha) <= tail."""
    for m in range(probes + 1):
        if 1.0 - binomial_cdf(probes, m, alpha) <= tail:
            return m
    return probes


def _confident_decision(score_fn, window: Window, cfg: SmoothingConfig, gamma: float) -> str:
    samples = sample_scores(score_fn, window, cfg)
    bounds = percentile_bounds(samples, cfg.percentile_p, 0.0, cfg.alpha)
    if bounds.lower > gamma:
        return ANOMALY
    if bounds.upper <= gamma:
        return BENIGN
    return ABSTAIN


def _scale_to_budget(x_vals, direction, w, budget, max_iter=40):
    """Largest s with dtw(x, x + s * direction) <= budget, by doubling+bisection.

    DTW along a ray need not be monotone, so the caller re-verifies the final
    probe; this only steers candidates toward the boundary.
    """
    lo, hi = 0.0, 1.0
    d = dtw_distance(x_vals, x_vals + direction, w, 2)
    it = 0
    while d <= budget and it < max_iter:
        lo, hi = hi, hi * 2.0
        d = dtw_distance(x_vals, x_vals + hi * direction, w, 2)
        it += 1
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if dtw_distance(x_vals, x_vals + mid * direction, w, 2) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


def _shift_field(vals: np.ndarray, shift: int) -> np.ndarray:
    seq_len = vals.shape[0]
    rolled = np.empty_like(vals)
    if shift > 0:
        rolled[: seq_len - shift] = vals[shift:]
        rolled[seq_len - shift :] = vals[-1]
    else:
        rolled[-shift:] = vals[:shift]
        rolled[: -shift] = vals[0]
    return rolled - vals


def _probe_directions(x: Window, w: int, rng: np.random.Generator, count: int):
    """Candidate perturbation directions for one window.

    Returns (directions, n_boundary): the first n_boundary are deterministic
    slack rays and warp fields that the caller always pushes to the budget
    boundary, where certificate violations would live.
    """
    vals = x.values
    seq_len, channels = vals.shape
    env = keogh_envelope(x, w)
    stats = slack_stats(x, env)
    signed = _signed_slack(vals, env)
    row_norms = np.sqrt((stats.delta * stats.delta).sum(axis=1))
    star = int(np.argmax(row_norms))
    dirs = []
    # slack field with overflow at the max-slack row, the proportional
    # overshoot ray (the direction attaining the transfer bound), and
    # near-parallel blends of it with warp fields
    overflow = signed.copy()
    if row_norms[star] > 0:
        overflow[star] *= 2.0
    else:
        overflow[star, 0] += 1.0
    dirs.append(overflow)
    shifts = [
        d for s in (1, -1, 2, -2) if w >= abs(s)
        for d in (_shift_field(vals, s),) if np.any(d != 0.0)
    ]
    if np.any(signed != 0.0):
        dirs.append(signed.copy())
        for blend in shifts[:2]:
            bn = math.sqrt(float((blend * blend).sum()))
            sn = math.sqrt(float((signed * signed).sum()))
            if bn > 0:
                dirs.append(signed + 0.25 * sn / bn * blend)
        dirs.append(0.6 * signed + 0.4 * overflow)
    dirs.extend(shifts)
    n_boundary = len(dirs)
    while len(dirs) < count:
        kind = rng.integers(3)
        if kind == 0:
            dirs.append(rng.standard_normal(vals.shape))
        elif kind == 1:
            scale = rng.uniform(0.3, 1.0, (seq_len, 1))
            ov = signed * scale
            row = int(rng.integers(seq_len))
            ov[row] += rng.standard_normal(channels) * max(row_norms[star], 0.1)
            dirs.append(ov)
        else:
            sparse = np.zeros_like(vals)
            sparse[rng.integers(seq_len), rng.integers(channels)] = 1.0
            dirs.append(sparse)
    return dirs[:count], min(n_boundary, count)


def falsify_windows(
    certified,  # iterable of (Window, decision, dtw_radius)
    score_fn,
    cfg: SmoothingConfig,
    w: int,
    gamma: float,
    probes: int = 1000,
    seed: int = 7,
    denoiser: str = "identity",
    inflate_radii: float = 1.0,
) -> FalsifyReport:
    """Probe certified windows for decision flips inside their DTW balls."""
    if probes < 1:
        raise DomainError("need at least one probe")
    denoise = DENOISERS[denoiser]
    effective = score_fn if denoise is None else _DenoisedScorer(score_fn, denoise)
    report = FalsifyReport()
    usable = []
    for window, decision, radius in certified:
        if decision == ABSTAIN or radius <= 0.0:
            report.skipped_windows += 1
            continue
        usable.append((window, decision, radius * inflate_radii))
    if not usable:
        report.flip_threshold = flip_fail_threshold(probes, cfg.alpha)
        return report
    report.examined_windows = len(usable)
    per_window = max(1, math.ceil(probes / len(usable)))
    rng = np.random.default_rng(seed)
    probe_idx = 0
    for window, decision, budget in usable:
        if report.probes >= probes:
            break
        dirs, n_boundary = _probe_directions(window, w, rng, per_window)
        for k, direction in enumerate(dirs):
            if report.probes >= probes:
                break
            norm = math.sqrt(float((direction * direction).sum()))
            if norm == 0.0:
                continue
            # slack/warp rays always push to the boundary; of the random
            # directions some take the l2 shortcut (always feasible)
            if k >= n_boundary and rng.random() < 0.4:
                scale = budget * rng.uniform(0.5, 1.0) / norm
            else:
                scale = _scale_to_budget(window.values, direction, w, budget)
                scale *= rng.uniform(0.99, 1.0)
            probe_vals = window.values + scale * direction
            actual = dtw_distance(window.values, probe_vals, w, 2)
            if actual > budget:
                continue
            probe = Window(probe_vals, origin_index=window.origin_index)
            fresh_seed = (seed * 0x9E3779B97F4A7C15 + probe_idx * 1000003 + 17) & _MASK64
            fresh = _confident_decision(effective, probe, cfg.reseeded(fresh_seed), gamma)
            probe_idx += 1
            report.probes += 1
            if fresh == ABSTAIN:
                report.abstains += 1
            elif fresh != decision:
                report.flips += 1
                report.flip_details.append(
                    {
                        "origin_index": window.origin_index,
                        "dtw": actual,
                        "budget": budget,
                        "certified": decision,
                        "fresh": fresh,
                    }
                )
    report.flip_threshold = flip_fail_threshold(report.probes, cfg.alpha)
    report.failed = report.flips > report.flip_threshold
    return report
