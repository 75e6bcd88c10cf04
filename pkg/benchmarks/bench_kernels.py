#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

The same kernels back quantizer training, distillation and re-quantization,
so their speed dominates training runtime. The numpy path is what you get
with LATENTPLC_NO_NUMBA=1.

Usage:
    python benchmarks/bench_kernels.py [--n 20000] [--dim 16] [--iters 10]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from latentplc import kernels


def _time(fn, iters):
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=20000, help="batch size")
    parser.add_argument("--dim", type=int, default=16, help="latent dimension")
    parser.add_argument("--k", type=int, default=256, help="codebook entries")
    parser.add_argument("--iters", type=int, default=10, help="timed repetitions")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    x = rng.normal(size=(args.n, args.dim))
    rows = rng.normal(size=(args.k, args.dim))

    print(f"batch {args.n} x dim {args.dim}, codebook {args.k} entries, "
          f"{args.iters} repetitions (best time shown)")

    results = []
    idx_np = kernels.nearest_rows_numpy(x, rows)
    best, med = _time(lambda: kernels.nearest_rows_numpy(x, rows), args.iters)
    results.append(("nearest_rows", "numpy", best, med))

    c_np, s_np = kernels.scatter_accumulate_numpy(x, idx_np, args.k)
    best, med = _time(lambda: kernels.scatter_accumulate_numpy(x, idx_np, args.k), args.iters)
    results.append(("scatter_accumulate", "numpy", best, med))

    if kernels.numba is not None:
        idx_nb = kernels.nearest_rows_numba(x, rows)  # first call compiles
        best, med = _time(lambda: kernels.nearest_rows_numba(x, rows), args.iters)
        results.append(("nearest_rows", "numba", best, med))

        c_nb, s_nb = kernels.scatter_accumulate_numba(x, idx_nb, args.k)
        best, med = _time(
            lambda: kernels.scatter_accumulate_numba(x, idx_nb, args.k), args.iters
        )
        results.append(("scatter_accumulate", "numba", best, med))

        print("\nagreement (must be bit-exact):")
        print(f"  nearest_rows indices equal:   {np.array_equal(idx_np, idx_nb)}")
        print(f"  scatter counts equal:         {np.array_equal(c_np, c_nb)}")
        print(f"  scatter sums equal:           {np.array_equal(s_np, s_nb)}")
    else:
        print("numba unavailable; only the numpy path was timed")

    print(f"\n{'kernel':<20} {'backend':<8} {'best (ms)':>10} {'median (ms)':>12} {'speedup':>8}")
    base = {}
    for name, backend, best, med in results:
        if backend == "numpy":
            base[name] = best
        speedup = base[name] / best if best > 0 else float("inf")
        print(f"{name:<20} {backend:<8} {best * 1e3:>10.3f} {med * 1e3:>12.3f} {speedup:>7.2f}x")

    print(f"\nactive dispatch backend: {kernels.BACKEND} "
          f"(set LATENTPLC_NO_NUMBA=1 to force numpy)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
