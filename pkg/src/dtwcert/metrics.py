"""Detection metrics, radii statistics and certified confusion matrices.

Certified counts require provable stability: a window contributes to
CertifiedTP(t) (evasion) only when its smoothed decision is anomaly, its
label is 1, and its certified DTW radius covers the budget t; availability
mirrors this on benign windows. Abstaining windows count toward N but never
toward certified cells; their unperturbed decision (for the non-attacked
side of the matrix) is the plug-in percentile decision, flagged uncertified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyResults, LengthMismatch, SingleClass
from .smoothing import ANOMALY, BENIGN

__all__ = [
    "point_adjusted_f1",
    "roc_auc",
    "certified_confusion",
    "certified_curve",
    "radii_stats",
    "RadiiStats",
    "CertifiedCurve",
    "ConfusionCounts",
]


def point_adjusted_f1(pred, labels) -> float:
    """F1 after promoting any hit inside a true anomaly segment to the whole segment."""
    pred = np.asarray(pred, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if pred.shape != labels.shape:
        raise LengthMismatch(f"pred length {pred.shape} vs labels {labels.shape}")
    adjusted = pred.copy()
    boundaries = np.flatnonzero(np.diff(np.concatenate(([0], labels, [0]))))
    for start, stop in zip(boundaries[::2], boundaries[1::2]):
        if adjusted[start:stop].any():
            adjusted[start:stop] = 1
    tp = int(((adjusted == 1) & (labels == 1)).sum())
    fp = int(((adjusted == 1) & (labels == 0)).sum())
    fn = int(((adjusted == 0) & (labels == 1)).sum())
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks on ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"scores length {scores.shape} vs labels {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: float
    fp: float
    fn: float
    tn: float
    total: int

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0


def _point_preds(results) -> np.ndarray:
    return np.array([1 if r.point_decision == ANOMALY else 0 for r in results], dtype=np.int64)


def certified_confusion(results, labels, t: float, mode: str) -> ConfusionCounts:
    """Confusion counts where the attacked class must be certified to budget t.

    evasion: positives need decision == anomaly with dtw_radius >= t; the
    benign side uses the unperturbed decisions. availability: the mirror on
    negatives. Certified accuracy is (certified side + unperturbed side) / N.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(results) != labels.shape[0]:
        raise LengthMismatch(f"{len(results)} results vs {labels.shape[0]} labels")
    point = _point_preds(results)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if mode == "evasion":
        cert_tp = sum(
            1
            for r, y in zip(results, labels)
            if y == 1 and r.decision == ANOMALY and r.dtw_radius >= t
        )
        fp = int(((point == 1) & (labels == 0)).sum())
        tn = int(((point == 0) & (labels == 0)).sum())
        return ConfusionCounts(tp=cert_tp, fp=fp, fn=n_pos - cert_tp, tn=tn, total=len(results))
    if mode == "availability":
        cert_tn = sum(
            1
            for r, y in zip(results, labels)
            if y == 0 and r.decision == BENIGN and r.dtw_radius >= t
        )
        tp = int(((point == 1) & (labels == 1)).sum())
        fn = int(((point == 0) & (labels == 1)).sum())
        return ConfusionCounts(tp=tp, fp=n_neg - cert_tn, fn=fn, tn=cert_tn, total=len(results))
    raise ValueError(f"unknown attack mode {mode!r}")


@dataclass(frozen=True)
class CertifiedCurve:
    budgets: np.ndarray
    certified_accuracy: np.ndarray
    certified_f1: np.ndarray
    attack_mode: str


def certified_curve(results, labels, budgets, mode: str) -> CertifiedCurve:
    """Certified accuracy / F1 as functions of the attack budget."""
    budgets = np.asarray(budgets, dtype=np.float64)
    acc = np.empty(budgets.size)
    f1 = np.empty(budgets.size)
    for i, t in enumerate(budgets):
        counts = certified_confusion(results, labels, float(t), mode)
        acc[i] = counts.accuracy
        f1[i] = counts.f1
    return CertifiedCurve(
        budgets=budgets, certified_accuracy=acc, certified_f1=f1, attack_mode=mode
    )


@dataclass(frozen=True)
class RadiiStats:
    mean: float
    max: float
    std: float
    certified_proportion: float


def radii_stats(results) -> RadiiStats:
    """Mean/max/population-std of the DTW radii and the nonzero fraction."""
    if not len(results):
        raise EmptyResults("no certification results")
    radii = np.array([r.dtw_radius for r in results], dtype=np.float64)
    return RadiiStats(
        mean=float(radii.mean()),
        max=float(radii.max()),
        std=float(radii.std()),
        certified_proportion=float((radii > 0).mean()),
    )
