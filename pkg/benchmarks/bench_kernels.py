"""Compare the compiled and numpy table solvers on the same problem.

Usage: python benchmarks/bench_kernels.py [--L 4 6 8] [--m-bar 3] [--n-bar 2]
"""
import argparse
import time

import numpy as np

from spinchain import backend
from spinchain.bath import SpectralDensity
from spinchain.contour import ContourGrid
from spinchain.inchworm import Truncation, solve_tables
from spinchain.model import CouplingSpec, SpinBosonUnit, SpinParams


def run(solver, unit, cpl, grid, trunc):
    t0 = time.perf_counter()
    table = solve_tables(unit, cpl, cpl, grid, trunc, solver=solver)
    return time.perf_counter() - t0, table


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--L", nargs="+", type=int, default=[4, 6, 8])
    p.add_argument("--m-bar", type=int, default=3)
    p.add_argument("--n-bar", type=int, default=2)
    args = p.parse_args()
    unit = SpinBosonUnit(SpinParams(1.0, 1.0), SpectralDensity(0.2, 2.5, 10.0, 100), 5.0)
    cpl = CouplingSpec.heisenberg(jx=0.1, jz=0.04)
    trunc = Truncation(args.m_bar, args.n_bar)
    try:
        fast = backend.get("compiled")
    except ImportError:
        print("compiled backend unavailable; build the extension first")
        return
    slow = backend.get("python")
    print(f"{'L':>4} {'evaluations':>12} {'compiled s':>11} {'python s':>10} {'speedup':>8} {'max diff':>9}")
    for L in args.L:
        grid = ContourGrid(0.1, L)
        tf, a = run(fast, unit, cpl, grid, trunc)
        ts, b = run(slow, unit, cpl, grid, trunc)
        diff = float(np.abs(a.phi - b.phi).max())
        print(f"{L:>4} {a.count:>12} {tf:>11.4f} {ts:>10.4f} {ts / tf:>8.1f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
