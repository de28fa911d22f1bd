"""Line-protocol anomaly scorer over stdio or a TCP socket.

Protocol (LF-terminated ASCII, single-space fields, shortest round-trip
decimals):

    client: DTWCERT 1
    server: OK pyscorer
    client: SCORE <T> <C> v_00 v_01 ... v_(T-1)(C-1)
    server: R <score>        on success
    server: E <reason>       on any malformed request; the loop continues

Built-in scorers: ``echo-first`` returns the window's first value,
``mean-abs`` the mean absolute value, and ``file:PATH`` replays precomputed
scores from a file (one per line, served in request order) - the template
for wrapping a real pre-trained detector via batch inference.

Exactly one response line per request line; a finite request never gets a
non-finite score. Transport closure ends the loop with exit code 0.
"""

import argparse
import math
import socket
import sys

PROTOCOL_VERSION = "1"
SERVER_NAME = "pyscorer"


def shortest(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


class EchoFirstScorer:
    name = "echo-first"

    def score(self, rows, channels):
        return rows[0][0]


class MeanAbsScorer:
    name = "mean-abs"

    def score(self, rows, channels):
        return math.fsum(abs(v) for row in rows for v in row) / (len(rows) * channels)


class FileLookupScorer:
    """Replays scores from a file, one per request, in request order."""

    name = "file-lookup"

    def __init__(self, path):
        with open(path, "r", encoding="ascii") as fh:
            self._scores = [float(line) for line in fh.read().split()]
        self._next = 0

    def score(self, rows, channels):
        if self._next >= len(self._scores):
            raise LookupError("score file exhausted")
        value = self._scores[self._next]
        self._next += 1
        return value


def make_scorer(spec: str):
    if spec == "echo-first":
        return EchoFirstScorer()
    if spec == "mean-abs":
        return MeanAbsScorer()
    if spec.startswith("file:"):
        return FileLookupScorer(spec[5:])
    raise ValueError(f"unknown scorer {spec!r}")


def handle_request(line: str, scorer) -> str:
    parts = line.split(" ")
    if parts[0] != "SCORE" or len(parts) < 3:
        return "E parse"
    try:
        seq_len = int(parts[1])
        channels = int(parts[2])
    except ValueError:
        return "E parse"
    if seq_len < 1 or channels < 1 or len(parts) != 3 + seq_len * channels:
        return "E parse"
    values = []
    for token in parts[3:]:
        try:
            v = float(token)
        except ValueError:
            return "E parse"
        if not math.isfinite(v):
            return "E nonfinite-input"
        values.append(v)
    rows = [values[i * channels : (i + 1) * channels] for i in range(seq_len)]
    try:
        score = float(scorer.score(rows, channels))
    except Exception as exc:  # noqa: BLE001 - one response per request, always
        return f"E scorer {exc}"
    if not math.isfinite(score):
        return "E nonfinite-score"
    return f"R {shortest(score)}"


def serve_lines(read_line, write_line, scorer) -> None:
    """Request loop: handshake first, then one response per request line."""
    greeted = False
    while True:
        line = read_line()
        if line is None:
            return
        line = line.rstrip("\n").rstrip("\r")
        if not greeted:
            if line == f"DTWCERT {PROTOCOL_VERSION}":
                greeted = True
                write_line(f"OK {SERVER_NAME}")
            else:
                write_line("E handshake")
            continue
        write_line(handle_request(line, scorer))


def serve_stdio(scorer) -> None:
    def read_line():
        line = sys.stdin.readline()
        return line if line else None

    def write_line(text):
        sys.stdout.write(text + "\n")
        sys.stdout.flush()

    serve_lines(read_line, write_line, scorer)


def serve_socket(scorer, host: str, port: int, announce=None) -> None:
    with socket.create_server((host, port)) as server:
        if announce is not None:
            announce(server.getsockname()[1])
        while True:
            conn, _ = server.accept()
            with conn, conn.makefile("rw", encoding="ascii", newline="\n") as stream:

                def read_line():
                    line = stream.readline()
                    return line if line else None

                def write_line(text):
                    stream.write(text + "\n")
                    stream.flush()

                serve_lines(read_line, write_line, scorer)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pyscorer", description=__doc__)
    parser.add_argument("--scorer", default="mean-abs",
                        help="echo-first | mean-abs | file:PATH")
    parser.add_argument("--transport", default="stdio", choices=["stdio", "socket"])
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    args = parser.parse_args(argv)
    scorer = make_scorer(args.scorer)
    if args.transport == "stdio":
        serve_stdio(scorer)
    else:
        serve_socket(scorer, args.host, args.port,
                     announce=lambda p: print(f"LISTENING {p}", flush=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
