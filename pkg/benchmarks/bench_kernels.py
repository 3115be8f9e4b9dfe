#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--sizes 100 300] [--repeats 5]

Reports best-of-N wall times per kernel and backend plus the speedup.  The
first numba call per kernel compiles (cached on disk afterwards); compile
time is excluded by warming up before timing.
"""

import argparse
import time

import numpy as np

from udadil.kernels import IMPLEMENTATIONS


def _instances(size, rng):
    X = rng.normal(size=(size, 16))
    Y = rng.normal(size=(size, 16))
    C = rng.random((size, size))
    K = np.exp(-C / 0.3)
    a = np.full(size, 1.0 / size)
    loga = np.log(a)
    centroids = rng.normal(size=(8, 16))
    return {
        "pairwise_sqdist": (X, Y),
        "sinkhorn_scaling": (K, a, a, 1e-9, 200, 10),
        "sinkhorn_log": (C, loga, loga, 0.05, 1e-9, 200, 10),
        "assign_nearest": (X, centroids),
    }


def _best_of(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 300])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = list(IMPLEMENTATIONS)
    if "numba" not in backends:
        print("numba unavailable: timing the numpy fallback only")
    rng = np.random.default_rng(0)

    header = f"{'kernel':<18} {'size':>6} " + "".join(
        f"{b:>12}" for b in backends
    )
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for size in args.sizes:
        work = _instances(size, rng)
        for kernel, call_args in work.items():
            times = {}
            for backend in backends:
                fn = IMPLEMENTATIONS[backend][kernel]
                fn(*call_args)  # warm-up / JIT
                times[backend] = _best_of(fn, call_args, args.repeats)
            row = f"{kernel:<18} {size:>6} " + "".join(
                f"{times[b] * 1e3:>10.3f}ms" for b in backends
            )
            if len(backends) == 2:
                row += f"{times['numpy'] / times['numba']:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
