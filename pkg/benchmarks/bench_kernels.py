#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure numpy fallback.

Times each hot kernel on both backends at several array sizes, reports the
speedup, and cross-checks that the two implementations agree.

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --sizes 10000,1000000 --repeats 7
"""

import argparse
import time

import numpy as np

from geodispatch._kernels import pure

try:
    from geodispatch._kernels import _native as native
except ImportError:
    native = None

RADIUS = 6371.0


def make_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "haversine_km": (rng.uniform(-90, 90, n), rng.uniform(-180, 180, n),
                         rng.uniform(-90, 90, n), rng.uniform(-180, 180, n), RADIUS),
        "sigmoid": (rng.normal(0, 6, n),),
        "bce_loss": (rng.normal(0, 6, n), rng.uniform(0, 1, n)),
        "bce_grad": (rng.normal(0, 6, n), rng.uniform(0, 1, n)),
    }


def best_of(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def deviation(a, b):
    a, b = np.atleast_1d(np.asarray(a)), np.atleast_1d(np.asarray(b))
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b) / denom))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="10000,100000,1000000",
                        help="comma-separated array lengths (default: %(default)s)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats, best is kept (default: %(default)s)")
    args = parser.parse_args()
    sizes = [int(float(s)) for s in args.sizes.split(",")]

    if native is None:
        print("compiled kernels not built; timing the pure backend only")

    header = f"{'kernel':<14}{'n':>10}{'pure':>12}{'native':>12}{'speedup':>9}{'max rel dev':>13}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        inputs = make_inputs(n)
        for name, fn_args in inputs.items():
            t_pure = best_of(getattr(pure, name), fn_args, args.repeats)
            if native is not None:
                t_native = best_of(getattr(native, name), fn_args, args.repeats)
                dev = deviation(getattr(pure, name)(*fn_args),
                                getattr(native, name)(*fn_args))
                print(f"{name:<14}{n:>10}{t_pure * 1e3:>10.2f}ms"
                      f"{t_native * 1e3:>10.2f}ms{t_pure / t_native:>8.2f}x{dev:>13.2e}")
            else:
                print(f"{name:<14}{n:>10}{t_pure * 1e3:>10.2f}ms{'-':>12}{'-':>9}{'-':>13}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
