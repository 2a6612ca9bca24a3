"""Compiled vs NumPy kernels on the transformed right-hand side and the
polar bilinear interpolation.

    python3 benchmarks/bench_kernels.py [--sizes 32 64 128] [--repeat 5] [--threads 1 4]

Prints the best-of-repeat wall time per call for each backend and the speedup.
"""

import argparse
import timeit

import numpy as np

from slipfsi import _kernels
from slipfsi._kernels import _pykernels
from slipfsi.grid import AnnulusGrid, locate


def rhs_args(n, rng):
    g = AnnulusGrid(n, 2 * n, 0.5, 1.5)
    shapes = [(2, 2), (2,), (2, 2, 2), (2, 2), (2, 2, 2), (2,), (2, 2)]
    co = [np.ascontiguousarray(rng.standard_normal(s + g.shape)) for s in shapes]
    U = rng.standard_normal((2, n + 2, 2 * n))
    return g, (U, g.hr, g.d1_den, g.d2_den, g.inv_r, g.cos, g.sin, *co, 0.1)


def best(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, nargs="+", default=[1])
    args = p.parse_args()
    ext = _kernels._ext
    if ext is None:
        print("compiled kernels not available; only the NumPy fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':18s} {'grid':>10s} {'numpy ms':>10s} {'cython ms':>10s} {'threads':>7s} {'speedup':>8s}")
    for n in args.sizes:
        g, a = rhs_args(n, rng)
        t_py = best(lambda: _pykernels.transformed_rhs(*a), args.repeat)
        pts = rng.uniform(-1.4, 1.4, (20 * n * n, 2))
        pts = pts[(np.hypot(*pts.T) > 0.5) & (np.hypot(*pts.T) < 1.5)]
        fr, ft = locate(g, pts)
        v = rng.standard_normal((2,) + g.shape)
        b_py = best(lambda: _pykernels.bilinear_polar(v, fr, ft, g.n_r, g.n_theta), args.repeat)
        for k in args.threads:
            t_c = best(lambda: ext.transformed_rhs(*a, k), args.repeat) if ext else float("nan")
            print(f"{'transformed_rhs':18s} {f'{n}x{2 * n}':>10s} {1e3 * t_py:10.3f} {1e3 * t_c:10.3f} "
                  f"{k:7d} {t_py / t_c:8.2f}")
        b_c = best(lambda: ext.bilinear_polar(v, fr, ft, g.n_r, g.n_theta), args.repeat) if ext else float("nan")
        print(f"{'bilinear_polar':18s} {f'{len(pts)} pts':>10s} {1e3 * b_py:10.3f} {1e3 * b_c:10.3f} "
              f"{'-':>7s} {b_py / b_c:8.2f}")


if __name__ == "__main__":
    main()
