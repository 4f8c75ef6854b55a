"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/compare_backends.py [--quick]

Prints one row per (kernel, size) with the best-of-r wall time for each
backend and the speedup.
"""
import argparse
import time

import numpy as np

from rgrasp import kernels
from rgrasp.bench import random_sparse_dataset
from rgrasp.objectives import LEAST_SQUARES, Objective
from rgrasp.solvers import draw_samples, epoch_rng


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(sizes, n):
    rng = np.random.default_rng(0)
    for d in sizes:
        x = rng.standard_normal(d)
        yield "select_top", d, lambda be, x=x, d=d: be.select_top_fast(x, max(1, d // 10))

        ds = random_sparse_dataset(n, d, 20, seed=1)
        obj = Objective(LEAST_SQUARES, ds)
        z0 = np.zeros(d)
        g, marg = obj.full_gradient(z0, return_margins=True)
        T = np.sort(rng.choice(d, size=min(30, d), replace=False)).astype(np.int64)
        samples = draw_samples(epoch_rng(0, 1), n, 2 * n)
        eta = 0.1 / obj.lipschitz_estimate()
        args = (ds.indptr, ds.indices, ds.data, ds.y, obj.kernel_kind)
        yield "svrg_epoch", d, lambda be, args=args, z0=z0, g=g, m=marg, T=T, s=samples, e=eta: \
            be.svrg_epoch(*args, z0, g, m, T, e, s, len(s) // 6, len(T), True)
        yield "svrght_epoch", d, lambda be, args=args, z0=z0, g=g, m=marg, s=samples, e=eta: \
            be.svrght_epoch(*args, z0, g, m, e, s, 10)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--quick", action="store_true", help="smaller sizes and fewer repeats")
    args = p.parse_args()
    names = kernels.available_backends()
    if "cython" not in names:
        print("compiled extension not built; only the fallback is available")
    sizes = [1_000, 10_000] if args.quick else [1_000, 10_000, 100_000]
    repeats = 2 if args.quick else 5
    print(f"{'kernel':<14} {'d':>8} " + " ".join(f"{b:>12}" for b in names) + "   speedup")
    for name, d, fn in cases(sizes, n=200):
        t = {b: best_of(lambda: fn(kernels.get_backend(b)), repeats) for b in names}
        speed = t["python"] / t["cython"] if "cython" in t else float("nan")
        print(f"{name:<14} {d:>8} " + " ".join(f"{t[b] * 1e3:>10.3f}ms" for b in names) + f"   {speed:6.1f}x")


if __name__ == "__main__":
    main()
