#!/usr/bin/env python3
"""Benchmark the compiled hot kernels against their pure-numpy twins.

Usage: python benchmarks/bench_backends.py [--sizes 200,500,1000]

Times pairwise-density matrix assembly for each kernel family plus the
preimage fixed-point iteration.  The numba path is warmed up once before
timing so compilation is excluded.
"""

import argparse
import time

import numpy as np

from kbinfer import _backend


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="200,500,1000")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if _backend.active_backend() != "numba":
        print("numba backend unavailable (KB_BACKEND=numpy?); nothing to compare")
        return

    from kbinfer import _accel

    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        za = rng.normal(size=(n, 2))
        a1 = rng.normal(size=n)
        x0 = np.zeros(2)
        w = np.abs(rng.normal(size=n))
        chol = np.linalg.cholesky(0.25 * np.eye(2))

        cases = [
            ("gauss_pair_sym", (_accel.gauss_pair_sym, _backend.gauss_pair_sym_numpy),
             (za, 0.4)),
            ("gauss_pair", (_accel.gauss_pair, _backend.gauss_pair_numpy),
             (za, za[: n // 2], 0.4)),
            ("laplace_pair_sym",
             (_accel.laplace_pair_sym, _backend.laplace_pair_sym_numpy), (a1, 1.3)),
            ("cauchy_pair_sym",
             (_accel.cauchy_pair_sym, _backend.cauchy_pair_sym_numpy), (a1, 0.8)),
            ("laplace_smoothed",
             (_accel.laplace_smoothed_pair, _backend.laplace_smoothed_pair_numpy),
             (a1, a1[: n // 2], 2.0, 1.0, False)),
            ("preimage_iterate",
             (_accel.preimage_iterate, _backend.preimage_iterate_numpy),
             (za, w, chol, x0, 1e-8, 200)),
        ]
        for name, (fast, ref), call_args in cases:
            fast(*call_args)  # warm-up / JIT
            t_fast = _time(fast, *call_args)
            t_ref = _time(ref, *call_args)
            rows.append((name, n, t_ref * 1e3, t_fast * 1e3, t_ref / t_fast))

    print(f"{'kernel':<20} {'n':>6} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, n, ref_ms, fast_ms, speedup in rows:
        print(f"{name:<20} {n:>6} {ref_ms:>10.3f} {fast_ms:>10.3f} {speedup:>8.2f}")


if __name__ == "__main__":
    main()
