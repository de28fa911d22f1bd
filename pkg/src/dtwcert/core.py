"""Data model, CSV ingestion, normalization and sliding-window extraction.

All containers are frozen dataclasses over read-only numpy arrays, so they can
be shared freely across worker threads. Operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ChannelMismatch,
    LengthMismatch,
    NonFiniteValue,
    ParseError,
    WindowTooLarge,
)

STD_FLOOR = 1e-8


def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(values, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeSeries:
    """Multichannel series, values shaped (length, channels)."""

    values: np.ndarray
    channel_names: tuple[str, ...] | None = None

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ChannelMismatch(f"expected a (length, channels) matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            i, k = np.argwhere(~np.isfinite(v))[0]
            raise NonFiniteValue("<series>", int(i), int(k))
        object.__setattr__(self, "values", _frozen(v))
        if self.channel_names is not None and len(self.channel_names) != v.shape[1]:
            raise ChannelMismatch("channel_names length does not match channel count")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Window:
    """One sliding-window slice; origin_index is the timestep of its final point."""

    values: np.ndarray
    origin_index: int = -1

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ChannelMismatch(f"expected a (T, channels) matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            i, k = np.argwhere(~np.isfinite(v))[0]
            raise NonFiniteValue("<window>", int(i), int(k))
        object.__setattr__(self, "values", _frozen(v))

    @property
    def seq_len(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean and std (std floored at STD_FLOOR when applied)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.atleast_1d(self.mean).ravel()))
        object.__setattr__(self, "std", _frozen(np.atleast_1d(self.std).ravel()))
        if self.mean.shape != self.std.shape:
            raise ChannelMismatch("mean and std have different channel counts")


@dataclass(frozen=True)
class LabeledDataset:
    train: TimeSeries
    test: TimeSeries
    test_labels: np.ndarray
    norm_stats: NormStats

    def __post_init__(self):
        labels = np.asarray(self.test_labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != self.test.length:
            raise LengthMismatch(
                f"labels length {labels.shape} does not match test length {self.test.length}"
            )
        if not np.isin(labels, (0, 1)).all():
            raise ParseError("<labels>", int(np.argwhere(~np.isin(labels, (0, 1)))[0][0]), 0,
                             "(labels must be 0 or 1)")
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "test_labels", labels)


def load_csv(path_data, path_labels=None):
    """Parse a header + comma-separated float table, optionally with a label file.

    One row per timestep, one column per channel. Any unparsable or non-finite
    cell is a hard error; there is no imputation. Returns a TimeSeries, or a
    (TimeSeries, labels) pair when a label path is given.
    """
    with open(path_data, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path_data, 0, 0, "(empty file)")
    header = [h.strip() for h in lines[0].split(",")]
    width = len(header)
    rows = np.empty((len(lines) - 1, width))
    for r, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != width:
            raise ParseError(path_data, r + 1, len(cells), "(wrong column count)")
        for c, cell in enumerate(cells):
            try:
                val = float(cell)
            except ValueError:
                raise ParseError(path_data, r + 1, c) from None
            if not math.isfinite(val):
                raise NonFiniteValue(path_data, r + 1, c)
            rows[r, c] = val
    series = TimeSeries(rows, channel_names=tuple(header))
    if path_labels is None:
        return series
    labels = load_labels(path_labels)
    if labels.shape[0] != series.length:
        raise LengthMismatch(
            f"{path_labels}: {labels.shape[0]} labels for {series.length} timesteps"
        )
    return series, labels


def load_labels(path) -> np.ndarray:
    """One ASCII integer 0/1 per line, LF-terminated."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    labels = np.empty(len(lines), dtype=np.int64)
    for r, line in enumerate(lines):
        try:
            val = int(line.strip())
        except ValueError:
            raise ParseError(path, r, 0) from None
        if val not in (0, 1):
            raise ParseError(path, r, 0, "(labels must be 0 or 1)")
        labels[r] = val
    return labels


def channel_stats(series: TimeSeries) -> NormStats:
    """Per-channel mean/std of a (training) series, population std."""
    v = series.values
    return NormStats(mean=v.mean(axis=0), std=v.std(axis=0))


def normalize(series: TimeSeries, stats: NormStats) -> TimeSeries:
    """Per-channel z-score: (x - mean) / max(std, STD_FLOOR)."""
    if stats.mean.shape[0] != series.channels:
        raise ChannelMismatch(
            f"stats cover {stats.mean.shape[0]} channels, series has {series.channels}"
        )
    denom = np.maximum(stats.std, STD_FLOOR)
    return TimeSeries((series.values - stats.mean) / denom, series.channel_names)


def sliding_windows(series: TimeSeries, seq_len: int) -> list[Window]:
    """All stride-1 windows of length seq_len; window j covers [j, j+seq_len-1]."""
    if not 1 <= seq_len <= series.length:
        raise WindowTooLarge(f"window length {seq_len} exceeds series length {series.length}")
    v = series.values
    return [
        Window(v[j : j + seq_len], origin_index=j + seq_len - 1)
        for j in range(series.length - seq_len + 1)
    ]


def window_labels(labels: np.ndarray, seq_len: int) -> np.ndarray:
    """Window-level labels: the label of each window's final timestep."""
    labels = np.asarray(labels)
    if seq_len > labels.shape[0]:
        raise WindowTooLarge(f"window length {seq_len} exceeds label count {labels.shape[0]}")
    return labels[seq_len - 1 :]


def load_dataset(train_path, test_path, labels_path) -> LabeledDataset:
    """Load train/test CSVs plus labels and normalize both with train stats."""
    train = load_csv(train_path)
    test, labels = load_csv(test_path, labels_path)
    if train.channels != test.channels:
        raise ChannelMismatch(
            f"train has {train.channels} channels, test has {test.channels}"
        )
    stats = channel_stats(train)
    return LabeledDataset(
        train=normalize(train, stats),
        test=normalize(test, stats),
        test_labels=labels,
        norm_stats=stats,
    )
