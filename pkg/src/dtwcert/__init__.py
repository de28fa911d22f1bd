"""Certified DTW robustness for smoothed time-series anomaly detectors."""

__version__ = "0.1.0"

from .certify import (
    CertificationResult,
    certify_batch,
    certify_window,
    dtw_radius,
    lp_dtw_radius,
    numeric_infimum_oracle,
    sound_dtw_radius,
    worst_case_witness,
)
from .core import (
    LabeledDataset,
    TimeSeries,
    Window,
    load_csv,
    load_dataset,
    normalize,
    sliding_windows,
    window_labels,
)
from .dtw import (
    Envelope,
    SlackStats,
    dtw_distance,
    keogh_envelope,
    keogh_lower_bound,
    slack_stats,
)
from .kernels import BACKEND
from .metrics import (
    certified_confusion,
    certified_curve,
    point_adjusted_f1,
    radii_stats,
    roc_auc,
)
from .smoothing import (
    ABSTAIN,
    ANOMALY,
    BENIGN,
    ScoreSamples,
    SmoothingConfig,
    binomial_cdf,
    certified_l2_radius,
    gaussian_cdf,
    gaussian_icdf,
    percentile_bounds,
    sample_scores,
)

__all__ = [
    "BACKEND",
    "ABSTAIN",
    "ANOMALY",
    "BENIGN",
    "CertificationResult",
    "Envelope",
    "LabeledDataset",
    "ScoreSamples",
    "SlackStats",
    "SmoothingConfig",
    "TimeSeries",
    "Window",
    "binomial_cdf",
    "certified_confusion",
    "certified_curve",
    "certified_l2_radius",
    "certify_batch",
    "certify_window",
    "dtw_distance",
    "dtw_radius",
    "gaussian_cdf",
    "gaussian_icdf",
    "keogh_envelope",
    "keogh_lower_bound",
    "load_csv",
    "load_dataset",
    "lp_dtw_radius",
    "normalize",
    "numeric_infimum_oracle",
    "percentile_bounds",
    "point_adjusted_f1",
    "radii_stats",
    "roc_auc",
    "sample_scores",
    "slack_stats",
    "sound_dtw_radius",
    "sliding_windows",
    "window_labels",
    "worst_case_witness",
]
