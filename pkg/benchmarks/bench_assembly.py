"""Benchmark the numba and numpy assembly backends against each other.

Times residual and Jacobian assembly over a sweep of mesh sizes and
degrees, checks that both backends agree to rounding, and prints a table
with the speedup of the compiled path.  Run as:

    python benchmarks/bench_assembly.py [--repeats N]
"""

import argparse
import time

import numpy as np

from mafem.assembly import jacobian, residual
from mafem.fespace import FeFunction, FeSpace
from mafem.kernels import HAVE_NUMBA
from mafem.mesh import triangulate, unit_square


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(space, u, f, repeats):
    ops = (("residual", lambda b: residual(u, f, backend=b)),
           ("jacobian", lambda b: jacobian(u, backend=b)))
    rows = []
    for op, fn in ops:
        out = {}
        for backend in ("numpy", "numba") if HAVE_NUMBA else ("numpy",):
            fn(backend)  # warm up (jit compile, caches)
            out[backend] = best_of(lambda: fn(backend), repeats)
        rows.append((op, out))
    return rows


def check_agreement(u, f):
    r_np = residual(u, f, backend="numpy").values
    j_np = jacobian(u, backend="numpy").matrix
    if not HAVE_NUMBA:
        return 0.0
    r_nb = residual(u, f, backend="numba").values
    j_nb = jacobian(u, backend="numba").matrix
    gap = np.max(np.abs(r_np - r_nb))
    jdiff = (j_np - j_nb).tocoo()
    if jdiff.nnz:
        gap = max(gap, np.max(np.abs(jdiff.data)))
    return float(gap)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    def paraboloid(p):
        p = np.atleast_2d(p)
        return 0.5 * (p[:, 0] ** 2 + p[:, 1] ** 2)

    ones = lambda p: np.ones(len(np.atleast_2d(p)))
    print("numba available:", HAVE_NUMBA)
    header = "{:>6} {:>3} {:>8} {:>10} {:>12} {:>12} {:>9} {:>10}".format(
        "cells", "k", "dofs", "op", "numpy [ms]", "numba [ms]", "speedup",
        "max gap")
    print(header)
    print("-" * len(header))
    for level in (3, 4, 5, 6):
        for k in (2, 3):
            mesh = triangulate(unit_square(), refinements=level)
            space = FeSpace(mesh, k)
            vals = paraboloid(space.dof_coords)
            u = FeFunction(space, vals)
            gap = check_agreement(u, ones)
            for op, out in bench(space, u, ones, args.repeats):
                tnp = out["numpy"] * 1e3
                if "numba" in out:
                    tnb = out["numba"] * 1e3
                    speed = "{:8.1f}x".format(out["numpy"] / out["numba"])
                else:
                    tnb, speed = float("nan"), "n/a"
                print("{:>6} {:>3} {:>8} {:>10} {:>12.3f} {:>12.3f} {:>9} "
                      "{:>10.1e}".format(mesh.num_cells, k, space.num_dofs,
                                         op, tnp, tnb, speed, gap))


if __name__ == "__main__":
    main()
