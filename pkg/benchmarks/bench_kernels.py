"""Time the numba-compiled kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--batch 256] [--classes 8 32] [--repeat 20]

Compilation happens in a warm-up call and is not timed. Both routes are called
directly (``kernels.ROUTES``), so the EMD2LOSS_DISABLE_NUMBA flag has no effect here.
"""

import argparse
import timeit

import numpy as np

from emd2loss import _jit, kernels


def make_inputs(name, rng, n, C):
    P = rng.dirichlet(np.ones(C), size=n)
    y = rng.integers(0, C, n)
    A = np.triu(rng.random((C, C)), 1)
    D = A + A.T
    if name == "emd2_ordered":
        return lambda: (P, y)
    if name == "single_label":
        return lambda: (P, y, D)
    if name == "hybrid_reg":
        return lambda: (P, y, D, 2.0, -0.25)
    if name == "percentile_rows":
        return lambda: (D,)
    if name == "accumulate":
        F = np.abs(rng.standard_normal((n, 64)))
        return lambda: (np.zeros((C, 64)), np.zeros(C, dtype=np.int64), F, y)
    if name == "sinkhorn":
        T = np.full((n, C), 1.0 / C)
        return lambda: (P, T, D, 1.0, 100)
    raise KeyError(name)


def bench(batch, classes, repeat, seed=0):
    rows = []
    for C in classes:
        for name, (np_fn, jit_fn) in kernels.ROUTES.items():
            args = make_inputs(name, np.random.default_rng(seed), batch, C)
            jit_fn(*args())  # compile
            t_np = min(timeit.repeat(lambda: np_fn(*args()), number=1, repeat=repeat))
            t_jit = min(timeit.repeat(lambda: jit_fn(*args()), number=1, repeat=repeat))
            rows.append((name, C, t_np, t_jit))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--classes", type=int, nargs="+", default=[8, 32])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not _jit.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"batch={args.batch}, best of {args.repeat}")
    print(f"{'kernel':<16} {'C':>4} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}")
    for name, C, t_np, t_jit in bench(args.batch, args.classes, args.repeat):
        print(f"{name:<16} {C:>4} {t_np * 1e3:>11.3f} {t_jit * 1e3:>11.3f} {t_np / t_jit:>7.1f}x")


if __name__ == "__main__":
    main()
