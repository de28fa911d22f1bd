"""Reproducible synthetic train/test datasets for the acceptance harness.

Backbones: a multiphase sine or a smoothed random walk. Anomalies are
injected into the test span only: additive spikes, level shifts over a
segment, and temporal shifts (the segment is replaced by the clean backbone
evaluated a few steps ahead, which moves it far in l2 but barely in DTW).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TimeSeries
from .errors import SynthSpecError

__all__ = ["AnomalySpec", "parse_anomaly", "generate", "save_series", "save_labels"]


@dataclass(frozen=True)
class AnomalySpec:
    kind: str  # spike | level | warp
    start: int
    stop: int  # exclusive
    magnitude: float


def parse_anomaly(text: str) -> AnomalySpec:
    """Parse "spike:IDX[:MAG]", "level:A-B[:MAG]" or "warp:A-B[:SHIFT]"."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise SynthSpecError(f"bad anomaly spec {text!r}")
    kind = parts[0]
    if kind not in ("spike", "level", "warp"):
        raise SynthSpecError(f"unknown anomaly kind {kind!r}")
    try:
        if kind == "spike":
            start = int(parts[1])
            stop = start + 1
            magnitude = float(parts[2]) if len(parts) == 3 else 3.0
        else:
            a, b = parts[1].split("-")
            start, stop = int(a), int(b)
            magnitude = float(parts[2]) if len(parts) == 3 else (1.5 if kind == "level" else 6.0)
    except ValueError:
        raise SynthSpecError(f"bad anomaly spec {text!r}") from None
    if start < 0 or stop <= start:
        raise SynthSpecError(f"empty anomaly span in {text!r}")
    return AnomalySpec(kind, start, stop, magnitude)


def generate(
    kind: str,
    train_len: int,
    test_len: int,
    channels: int,
    anomalies: list[AnomalySpec],
    seed: int,
    period: float = 100.0,
    amplitude: float = 1.0,
    noise_level: float = 0.05,
):
    """Return (train, test, test_labels); identical output for identical args."""
    if kind not in ("sine", "walk"):
        raise SynthSpecError(f"unknown backbone kind {kind!r}")
    if train_len < 2 or test_len < 2 or channels < 1:
        raise SynthSpecError("need train_len >= 2, test_len >= 2, channels >= 1")
    rng = np.random.default_rng(seed)
    max_shift = max(
        (int(a.magnitude) for a in anomalies if a.kind == "warp"), default=0
    )
    total = train_len + test_len + max_shift + 1

    if kind == "sine":
        t = np.arange(total)[:, None]
        phases = np.linspace(0.0, np.pi / 2.0, channels)[None, :]
        clean = amplitude * np.sin(2.0 * np.pi * t / period + phases)
    else:
        steps = rng.normal(0.0, amplitude / 25.0, (total, channels))
        clean = np.cumsum(steps, axis=0)
        kernel = np.ones(9) / 9.0
        for c in range(channels):
            clean[:, c] = np.convolve(clean[:, c], kernel, mode="same")

    train = clean[:train_len] + rng.normal(0.0, noise_level, (train_len, channels))
    test_clean = clean[train_len : train_len + test_len].copy()
    labels = np.zeros(test_len, dtype=np.int64)
    for spec in anomalies:
        if spec.stop > test_len:
            raise SynthSpecError(f"anomaly span [{spec.start}, {spec.stop}) exceeds test length")
        if spec.kind == "spike":
            test_clean[spec.start] += spec.magnitude
        elif spec.kind == "level":
            test_clean[spec.start : spec.stop] += spec.magnitude
        else:  # warp: splice in the backbone shifted forward in time
            shift = int(spec.magnitude)
            src = train_len + spec.start + shift
            test_clean[spec.start : spec.stop] = clean[src : src + (spec.stop - spec.start)]
        labels[spec.start : spec.stop] = 1
    test = test_clean + rng.normal(0.0, noise_level, (test_len, channels))

    names = tuple(f"ch{i}" for i in range(channels))
    return TimeSeries(train, names), TimeSeries(test, names), labels


def save_series(path, series: TimeSeries) -> None:
    names = series.channel_names or tuple(f"ch{i}" for i in range(series.channels))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(names) + "\n")
        for row in series.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_labels(path, labels) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")
