"""Benchmark the compiled flux/potential kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [side] [reps]
"""

import sys
import time

import numpy as np

from vexflow.backends import _kernels_py

try:
    from vexflow.backends import _kernels
except ImportError:
    _kernels = None


def bench(mod, a, p, eps, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        mod.flux(a, p, eps)
        mod.potential(a, p, eps)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    side = int(sys.argv[1]) if len(sys.argv) > 1 else 512
    reps = int(sys.argv[2]) if len(sys.argv) > 2 else 5
    rng = np.random.default_rng(0)
    m = side * side
    a = rng.standard_normal((m, 6))
    p = rng.uniform(1.0, 2.0, m)
    eps = 1e-4

    t_py = bench(_kernels_py, a, p, eps, reps)
    print(f"python  {side}x{side}x3 grid: {t_py * 1e3:8.2f} ms")
    if _kernels is None:
        print("cython  extension not built")
        return
    t_cy = bench(_kernels, a, p, eps, reps)
    print(f"cython  {side}x{side}x3 grid: {t_cy * 1e3:8.2f} ms")
    print(f"speedup {t_py / t_cy:.2f}x")
    fd = np.abs(_kernels.flux(a, p, eps) - _kernels_py.flux(a, p, eps)).max()
    pd = np.abs(_kernels.potential(a, p, eps) - _kernels_py.potential(a, p, eps)).max()
    print(f"max backend deviation: flux {fd:.3e}, potential {pd:.3e}")


if __name__ == "__main__":
    main()
