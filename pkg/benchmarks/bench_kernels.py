"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n-cells 64] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

import pdpsolve.core as core
import pdpsolve.precond as precond
from pdpsolve._backend import BACKEND, get_kernels
from pdpsolve.precond import build_mg_hierarchy
from pdpsolve.problems import poisson_matrix


def cases(n_cells):
    A = poisson_matrix(n_cells)
    n = A.shape[0]
    rng = np.random.default_rng(0)
    v, b = rng.standard_normal(n), rng.standard_normal(n)
    d = A.diagonal()
    H = build_mg_hierarchy(n_cells)
    return {
        "spmv": lambda: A.matvec(v),
        "rmatvec": lambda: A.rmatvec(v),
        "jacobi": lambda: core.kernels.jacobi_sweep(A.indptr, A.indices, A.data, d, b, v, 0.8),
        "vcycle": lambda: H(b),
    }


def best_time(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-cells", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = ["python"] + (["cython"] if BACKEND == "cython" else [])
    results = {}
    for name in names:
        k = get_kernels(name)
        core.kernels = precond.kernels = k
        results[name] = {c: best_time(f, args.repeat) for c, f in cases(args.n_cells).items()}
    dofs = (args.n_cells - 1) ** 2
    print(f"n_cells={args.n_cells} ({dofs} unknowns), best of {args.repeat}")
    print(f"{'kernel':<10}" + "".join(f"{n:>14}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for c in results["python"]:
        row = f"{c:<10}" + "".join(f"{results[n][c] * 1e6:>11.1f} us" for n in names)
        if len(names) > 1:
            row += f"{results['python'][c] / results['cython'][c]:>11.1f}x"
        print(row)
    if len(names) == 1:
        print("compiled kernels not built; only the fallback was timed")


if __name__ == "__main__":
    main()
