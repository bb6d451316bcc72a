"""Residual evaluation time, numba kernels vs the grouped numpy path.

    python benchmarks/bench_kernels.py --r 2 --n 64 128

Both backends run on the same assembled system; the script also checks that
they agree to rounding.
"""

import argparse
import time

import numpy as np

from phdg import assemble_system, build_structured_mesh
from phdg.harness import exact_boundary_data
from phdg.kernels import numba


def set_backend(system, use_numba):
    for op in (system.F_pq, system.F_qp, system.G_pq, system.G_qp):
        op.use_numba = use_numba


def time_eval(system, x, repeat):
    system(0.1, x)  # warm-up, triggers compilation
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        system(0.1, x)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--n", type=int, nargs="+", default=[32, 64, 128])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args()
    if numba is None:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'r':>2} {'n':>5} {'dofs':>9} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'max diff':>10}")
    for n in args.n:
        system = assemble_system(build_structured_mesh(n), args.r, 0.5, "data", exact_boundary_data())
        x = np.random.default_rng(0).standard_normal(system.size)
        set_backend(system, False)
        t_np = time_eval(system, x, args.repeat)
        y_np = system(0.1, x)
        set_backend(system, True)
        t_nb = time_eval(system, x, args.repeat)
        y_nb = system(0.1, x)
        diff = np.abs(y_np - y_nb).max() / np.abs(y_np).max()
        print(f"{args.r:>2} {n:>5} {system.size:>9} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} "
              f"{t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
