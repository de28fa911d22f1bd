#!/usr/bin/env python3
"""Compare the compiled and numpy kernel backends on the hot paths.

Usage: python benchmarks/bench_kernels.py [--seq-len 50] [--warp 4] [--pairs 2000]
"""

import argparse
import time

import numpy as np

from dtwcert import _pykern

try:
    from dtwcert import _ckern
except ImportError:
    _ckern = None


def bench(fn, args_list, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seq-len", type=int, default=50)
    parser.add_argument("--warp", type=int, default=4)
    parser.add_argument("--channels", type=int, default=1)
    parser.add_argument("--pairs", type=int, default=2000)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    pairs = [
        (
            rng.standard_normal((args.seq_len, args.channels)),
            rng.standard_normal((args.seq_len, args.channels)),
        )
        for _ in range(args.pairs)
    ]

    backends = [("numpy", _pykern)]
    if _ckern is not None:
        backends.append(("compiled", _ckern))
    else:
        print("compiled backend not built; showing numpy only")

    dtw_args = [(a, b, args.warp, 2) for a, b in pairs]
    env_args = [(a, args.warp) for a, _ in pairs]
    lb_inputs = []
    for a, b in pairs:
        upper, lower = _pykern.envelope(a, args.warp)
        lb_inputs.append((upper, lower, b, 2))

    print(f"T={args.seq_len} C={args.channels} w={args.warp}, {args.pairs} pairs, best of 3")
    print(f"{'kernel':<12}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for label, calls in (("band_dtw", dtw_args), ("envelope", env_args), ("lb_keogh", lb_inputs)):
        times = [bench(getattr(mod, label), calls) for _, mod in backends]
        row = f"{label:<12}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2 and times[1] > 0:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)

    # agreement spot-check
    a, b = pairs[0]
    if _ckern is not None:
        assert _pykern.band_dtw(a, b, args.warp, 2) == _ckern.band_dtw(a, b, args.warp, 2)
        print("backends agree on the spot-check pair")


if __name__ == "__main__":
    main()
