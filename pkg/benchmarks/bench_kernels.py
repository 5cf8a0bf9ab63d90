"""Time the compiled and numpy pair-sum kernels on lattice-sized problems.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per (n, cells, backend) with the best wall time and the maximum
relative difference between the two backends.
"""
import argparse
import timeit

import numpy as np

from kelvinlab import _ext


def lattice(n, m):
    h = 6.0 / m
    axis = -3.0 + h * (np.arange(m) + 0.5)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = ["python"] + (["cython"] if _ext.BACKEND == "cython" else [])
    print(f"{'n':>2} {'cells':>7} {'backend':>8} {'sum [ms]':>10} {'matrix [ms]':>12} {'max rel diff':>13}")
    for n, m in [(1, 512), (1, 2048), (2, 32), (2, 64), (3, 12), (3, 16)]:
        pts = lattice(n, m)
        w = rng.uniform(size=len(pts))
        power = 1.0 - n if n > 1 else -0.5
        ref = None
        for b in backends:
            t_sum = min(timeit.repeat(lambda: _ext.kernel_sum(pts, pts, w, power, 1e6, 0.0, backend=b),
                                      number=1, repeat=args.repeat))
            t_mat = min(timeit.repeat(lambda: _ext.kernel_matrix(pts, pts, power, 1e6, 0.0, backend=b),
                                      number=1, repeat=args.repeat))
            val = _ext.kernel_sum(pts, pts, w, power, 1e6, 0.0, backend=b)
            diff = 0.0 if ref is None else float(np.max(np.abs(val - ref) / np.abs(ref)))
            ref = val if ref is None else ref
            print(f"{n:>2} {len(pts):>7} {b:>8} {1e3 * t_sum:>10.2f} {1e3 * t_mat:>12.2f} {diff:>13.2e}")


if __name__ == "__main__":
    main()
