"""Compare the compiled and numpy interpolation scatter kernels.

Usage: python3 benchmarks/bench_kernels.py [--points N] [--repeat R]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from coaglin import _kernels_py
from coaglin.core import build_grid

try:
    from coaglin import _kernels as _compiled
except ImportError:
    _compiled = None


def _case(grid, npts: int, nrows: int = 256):
    rng = np.random.default_rng(0)
    z = np.exp(rng.uniform(np.log(grid.lo), np.log(grid.hi), npts))
    rows = rng.integers(0, nrows, npts)
    coef = rng.standard_normal(npts)
    return rows, z, coef, nrows


def _run(impl, grid, rows, z, coef, nrows):
    M = np.zeros((nrows, grid.N))
    impl(M, rows, z, coef, grid.Jmin, grid.Jmax, grid.P, grid.ref_nodes, grid.bary)
    return M


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    print(f"{'P':>4} {'points':>9} {'numpy [ms]':>11} {'cython [ms]':>12} {'speedup':>8} {'max diff':>10}")
    for P in (8, 16, 32):
        grid = build_grid(-8, 8, P)
        case = _case(grid, args.points)
        t_py = min(timeit.repeat(lambda: _run(_kernels_py.accumulate, grid, *case),
                                 number=1, repeat=args.repeat))
        if _compiled is None:
            print(f"{P:>4} {args.points:>9} {1e3 * t_py:>11.2f} {'n/a':>12}")
            continue
        t_cy = min(timeit.repeat(lambda: _run(_compiled.accumulate, grid, *case),
                                 number=1, repeat=args.repeat))
        diff = np.max(np.abs(_run(_kernels_py.accumulate, grid, *case)
                             - _run(_compiled.accumulate, grid, *case)))
        print(f"{P:>4} {args.points:>9} {1e3 * t_py:>11.2f} {1e3 * t_cy:>12.2f} "
              f"{t_py / t_cy:>8.1f} {diff:>10.1e}")


if __name__ == "__main__":
    main()
