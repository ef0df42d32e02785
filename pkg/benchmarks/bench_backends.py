#!/usr/bin/env python3
"""Benchmark the compiled sampling kernels against the numpy fallback.

The sparse solve itself is not benchmarked here: its hot loop is scipy's
compiled CSR matvec either way.  What the extension accelerates is the
field-sampling stage (trilinear gathers and finite-difference stencils over
millions of points), which dominates activation evaluation.

Usage: python benchmarks/bench_backends.py [--points N] [--repeats K]
"""

import argparse
import time

import numpy as np

from stimfield import kernels


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=2_000_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = kernels.available_backends()
    if len(backends) < 2:
        print("note: compiled extension not built; benchmarking the fallback only")

    rng = np.random.default_rng(0)
    vals = np.ascontiguousarray(rng.normal(size=(96, 96, 96)))
    origin = np.zeros(3)
    spacing = np.full(3, 0.5)
    hi = (np.array(vals.shape) - 1) * spacing
    pts = np.ascontiguousarray(rng.uniform(1.0, hi - 1.0, size=(args.points, 3)))
    step = spacing.copy()

    ops = {
        "trilinear": lambda impl: impl.trilinear_many(vals, origin, spacing, pts),
        "gradient": lambda impl: impl.gradient_many(vals, origin, spacing, pts, step),
        "hessian": lambda impl: impl.hessian_many(vals, origin, spacing, pts, step),
    }

    print(f"{args.points} points, volume {vals.shape}, best of {args.repeats}")
    print(f"{'kernel':<10} " + " ".join(f"{name:>12}" for name in backends)
          + f" {'speedup':>9}")
    for op_name, op in ops.items():
        times = {}
        for name, impl in backends.items():
            times[name] = time_call(lambda: op(impl), args.repeats)
        row = f"{op_name:<10} " + " ".join(
            f"{times[name] * 1e3:>10.1f}ms" for name in backends)
        if "cython" in times and "python" in times:
            row += f" {times['python'] / times['cython']:>8.1f}x"
        print(row)

    for a in backends.values():
        for b in backends.values():
            ra = a.hessian_many(vals, origin, spacing, pts[:1000], step)
            rb = b.hessian_many(vals, origin, spacing, pts[:1000], step)
            assert np.allclose(ra, rb, rtol=1e-12, atol=1e-12)
    print("backend agreement on a 1000-point sample: OK")


if __name__ == "__main__":
    main()
