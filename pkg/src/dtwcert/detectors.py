"""Anomaly score functions and threshold selection.

Built-ins (k-NN distance, principal-subspace reconstruction residual, max
absolute value) are deterministic, reentrant, and expose a vectorized
``score_many`` used by the smoothing sampler. ``ExternalScorer`` speaks the
line protocol below to an out-of-process scorer over stdio or a TCP socket,
so pre-trained models in any framework can plug in:

    handshake: client sends "DTWCERT 1", server replies "OK <name>"
    request:   "SCORE <T> <C> v_00 v_01 ... v_(T-1)(C-1)"   (row major)
    response:  "R <score>"  or  "E <message>"

Lines are LF-terminated ASCII, fields separated by single spaces, floats in
shortest round-trip decimal form.
"""

from __future__ import annotations

import os
import select
import shlex
import socket
import subprocess
from dataclasses import dataclass

import numpy as np

from .core import Window
from .errors import (
    ConnectFailure,
    DomainError,
    EmptyTrainSet,
    NonFiniteScore,
    ProtocolError,
    RankTooLarge,
    ScorerTimeout,
    ThresholdError,
)
from .metrics import point_adjusted_f1

__all__ = [
    "KnnScorer",
    "ReconstructionScorer",
    "ZmaxScorer",
    "ExternalScorer",
    "Threshold",
    "select_threshold",
    "make_scorer",
]


def _flatten_windows(windows) -> np.ndarray:
    mats = [w.values if isinstance(w, Window) else np.asarray(w) for w in windows]
    if not mats:
        raise EmptyTrainSet("no training windows")
    return np.stack([m.ravel() for m in mats])


class KnnScorer:
    """Mean euclidean distance to the k nearest flattened training windows."""

    kind = "knn"
    reentrant = True

    def __init__(self, train_windows, k: int = 5):
        self._train = _flatten_windows(train_windows)
        if not 1 <= k <= self._train.shape[0]:
            raise EmptyTrainSet(f"k={k} outside [1, {self._train.shape[0]}]")
        self.k = k
        self._train_sq = (self._train * self._train).sum(axis=1)

    def score_many(self, batch: np.ndarray) -> np.ndarray:
        flat = batch.reshape(batch.shape[0], -1)
        d2 = (
            (flat * flat).sum(axis=1)[:, None]
            + self._train_sq[None, :]
            - 2.0 * flat @ self._train.T
        )
        np.maximum(d2, 0.0, out=d2)
        if self.k < d2.shape[1]:
            part = np.partition(d2, self.k - 1, axis=1)[:, : self.k]
        else:
            part = d2
        return np.sqrt(part).mean(axis=1)

    def __call__(self, window_values) -> float:
        return float(self.score_many(np.asarray(window_values)[None])[0])


class ReconstructionScorer:
    """Residual norm after projecting onto the top principal components.

    The basis comes from an SVD of the centered flattened training windows.
    If the data cannot support the requested rank, the scorer falls back to
    the largest effective rank and sets ``degraded``.
    """

    kind = "reconstruction"
    reentrant = True

    def __init__(self, train_windows, rank: int = 4):
        data = _flatten_windows(train_windows)
        dim = data.shape[1]
        if not 1 <= rank <= dim:
            raise RankTooLarge(f"rank={rank} outside [1, {dim}]")
        self.mean = data.mean(axis=0)
        centered = data - self.mean
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
        tol = max(data.shape) * np.finfo(np.float64).eps * (svals[0] if svals.size else 0.0)
        effective = int((svals > tol).sum())
        self.requested_rank = rank
        self.rank = min(rank, max(effective, 1))
        self.degraded = self.rank < rank
        self.basis = vt[: self.rank]

    def score_many(self, batch: np.ndarray) -> np.ndarray:
        flat = batch.reshape(batch.shape[0], -1) - self.mean
        coeff = flat @ self.basis.T
        resid = flat - coeff @ self.basis
        return np.sqrt((resid * resid).sum(axis=1))

    def __call__(self, window_values) -> float:
        return float(self.score_many(np.asarray(window_values)[None])[0])


class ZmaxScorer:
    """Largest absolute value in the window; assumes normalized inputs."""

    kind = "zmax"
    reentrant = True

    def score_many(self, batch: np.ndarray) -> np.ndarray:
        return np.abs(batch.reshape(batch.shape[0], -1)).max(axis=1)

    def __call__(self, window_values) -> float:
        return float(np.abs(np.asarray(window_values)).max())


class ProjectionScorer:
    """Inner product with a fixed unit direction; a diagnostic detector.

    The exactly linear score makes the smoothing machinery's worst case
    attainable, which the validation harness uses to build boundary-tight
    certificates. The direction comes from an in-memory array or a CSV file
    of row-major floats matching the window cells.
    """

    kind = "proj"
    reentrant = True

    def __init__(self, direction, normalize: bool = True):
        if isinstance(direction, (str, bytes)):
            direction = np.loadtxt(direction, delimiter=",")
        vec = np.asarray(direction, dtype=np.float64).ravel()
        norm = float(np.sqrt((vec * vec).sum()))
        if norm == 0.0:
            raise DomainError("projection direction must be nonzero")
        self._u = vec / norm if normalize else vec

    def score_many(self, batch: np.ndarray) -> np.ndarray:
        return batch.reshape(batch.shape[0], -1) @ self._u

    def __call__(self, window_values) -> float:
        return float(np.asarray(window_values).ravel() @ self._u)


# ---------------------------------------------------------------------------
# External scorer client
# ---------------------------------------------------------------------------

class _StdioTransport:
    def __init__(self, cmd: str):
        try:
            self._proc = subprocess.Popen(
                shlex.split(cmd),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                env={**os.environ, "PYTHONUNBUFFERED": "1"},
            )
        except OSError as exc:
            raise ConnectFailure(f"could not launch scorer: {exc}") from exc
        self._buf = b""

    def send(self, line: str) -> None:
        try:
            self._proc.stdin.write(line.encode("ascii") + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise ConnectFailure(f"scorer pipe closed: {exc}") from exc

    def recv(self, timeout_ms: int) -> str:
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buf:
            ready, _, _ = select.select([fd], [], [], timeout_ms / 1000.0)
            if not ready:
                raise ScorerTimeout(timeout_ms)
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ConnectFailure("scorer closed the stream")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("ascii")

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


class _SocketTransport:
    def __init__(self, host: str, port: int, timeout_ms: int):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout_ms / 1000.0)
        except OSError as exc:
            raise ConnectFailure(f"could not reach scorer at {host}:{port}: {exc}") from exc
        self._buf = b""

    def send(self, line: str) -> None:
        try:
            self._sock.sendall(line.encode("ascii") + b"\n")
        except OSError as exc:
            raise ConnectFailure(f"scorer socket closed: {exc}") from exc

    def recv(self, timeout_ms: int) -> str:
        self._sock.settimeout(timeout_ms / 1000.0)
        while b"\n" not in self._buf:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise ScorerTimeout(timeout_ms) from None
            if not chunk:
                raise ConnectFailure("scorer closed the connection")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("ascii")

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


_PIPELINE_CHUNK = 128


def _shortest(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


class ExternalScorer:
    """Client for an out-of-process scorer speaking the line protocol.

    Requests are serialized per connection; batches pipeline in bounded
    chunks so neither side can fill a pipe buffer. Not reentrant.
    """

    kind = "external"
    reentrant = False

    def __init__(self, cmd=None, host=None, port=None, timeout_ms: int = 10000, name=None):
        if (cmd is None) == (host is None):
            raise ConnectFailure("configure exactly one of cmd or host/port")
        self._cmd, self._host, self._port = cmd, host, port
        self.timeout_ms = timeout_ms
        self._transport = None
        self.server_name = name

    def _connect(self):
        if self._transport is not None:
            return self._transport
        if self._cmd is not None:
            self._transport = _StdioTransport(self._cmd)
        else:
            self._transport = _SocketTransport(self._host, self._port, self.timeout_ms)
        self._transport.send("DTWCERT 1")
        reply = self._transport.recv(self.timeout_ms)
        if not reply.startswith("OK ") or len(reply.split(" ")) != 2:
            self._transport.close()
            self._transport = None
            raise ProtocolError(f"bad handshake reply: {reply!r}")
        self.server_name = reply.split(" ", 1)[1]
        return self._transport

    @staticmethod
    def _request_line(values: np.ndarray) -> str:
        t, c = values.shape
        cells = " ".join(_shortest(float(v)) for v in values.ravel())
        return f"SCORE {t} {c} {cells}"

    @staticmethod
    def _parse_response(line: str) -> float:
        parts = line.split(" ", 1)
        if parts[0] == "E":
            raise ProtocolError(f"scorer error: {parts[1] if len(parts) > 1 else ''}")
        if parts[0] != "R" or len(parts) != 2:
            raise ProtocolError(f"malformed response line: {line!r}")
        try:
            score = float(parts[1])
        except ValueError:
            raise ProtocolError(f"unparsable score: {parts[1]!r}") from None
        if not np.isfinite(score):
            raise NonFiniteScore(f"scorer returned non-finite score {parts[1]!r}")
        return score

    def __call__(self, window_values) -> float:
        values = np.asarray(window_values, dtype=np.float64)
        transport = self._connect()
        transport.send(self._request_line(values))
        return self._parse_response(transport.recv(self.timeout_ms))

    def score_many(self, batch: np.ndarray) -> np.ndarray:
        transport = self._connect()
        out = np.empty(batch.shape[0])
        for start in range(0, batch.shape[0], _PIPELINE_CHUNK):
            stop = min(start + _PIPELINE_CHUNK, batch.shape[0])
            for i in range(start, stop):
                transport.send(self._request_line(np.asarray(batch[i], dtype=np.float64)))
            for i in range(start, stop):
                out[i] = self._parse_response(transport.recv(self.timeout_ms))
        return out

    def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None

    def __enter__(self):
        self._connect()
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------------------
# Threshold selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Threshold:
    gamma: float
    selection: str


def select_threshold(scores, method: str = "train-quantile", q: float = 0.99, labels=None) -> Threshold:
    """Pick the decision threshold.

    train-quantile: q-th empirical quantile of benign scores, linear
    interpolation between order statistics. best-f1-scan: the candidate
    maximizing point-adjusted F1 over all midpoints between adjacent sorted
    unique scores (needs labels with at least one positive).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ThresholdError("no scores to select a threshold from")
    if method == "train-quantile":
        return Threshold(gamma=float(np.quantile(scores, q)), selection=method)
    if method == "best-f1-scan":
        if labels is None:
            raise ThresholdError("best-f1-scan needs labels")
        labels = np.asarray(labels)
        if not labels.any():
            raise ThresholdError("best-f1-scan needs at least one positive label")
        uniq = np.unique(scores)
        if uniq.size == 1:
            return Threshold(gamma=float(uniq[0]), selection=method)
        candidates = (uniq[:-1] + uniq[1:]) / 2.0
        best_gamma, best_f1 = float(candidates[0]), -1.0
        for g in candidates:
            f1 = point_adjusted_f1((scores > g).astype(np.int64), labels)
            if f1 > best_f1:
                best_gamma, best_f1 = float(g), f1
        return Threshold(gamma=best_gamma, selection=method)
    raise ThresholdError(f"unknown threshold method {method!r}")


def make_scorer(kind: str, train_windows=None, **params):
    """Build a scorer by kind name; the CLI's detector factory."""
    if kind == "knn":
        return KnnScorer(train_windows, k=int(params.get("k", 5)))
    if kind == "reconstruction":
        return ReconstructionScorer(train_windows, rank=int(params.get("rank", 4)))
    if kind == "zmax":
        return ZmaxScorer()
    if kind == "proj":
        return ProjectionScorer(params["direction"])
    if kind == "external":
        return ExternalScorer(
            cmd=params.get("cmd"),
            host=params.get("host"),
            port=params.get("port"),
            timeout_ms=int(params.get("timeout_ms", 10000)),
        )
    raise DomainError(f"unknown detector kind {kind!r}")
