"""Compare the compiled and numpy tree kernels on forest-sized workloads.

Usage: python benchmarks/bench_kernels.py [--rows 6000] [--features 6] [--trees 20]

Both backends must grow identical trees; the script checks that before
reporting timings.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fieldcheck import kernels


def _grow(backend, X, y, depth, min_leaf, n_sub, seed):
    ones = np.ones_like(y)
    return kernels.build_tree(
        X, y, y, ones, criterion=kernels.GINI, max_depth=depth, min_leaf=min_leaf,
        n_sub=n_sub, seed=seed, prior_num=1.0, prior_den=2.0, backend=backend,
    )


def bench(backend, X, y, trees, depth, min_leaf, n_sub, repeat):
    best_grow, best_apply = float("inf"), float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        grown = [_grow(backend, X, y, depth, min_leaf, n_sub, s) for s in range(trees)]
        t1 = time.perf_counter()
        for t in grown:
            kernels.apply_tree(X, *t[:5], backend=backend)
        t2 = time.perf_counter()
        best_grow = min(best_grow, t1 - t0)
        best_apply = min(best_apply, t2 - t1)
    return best_grow, best_apply


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=6000)
    ap.add_argument("--features", type=int, default=6)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--depth", type=int, default=8)
    ap.add_argument("--min-leaf", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    X = rng.standard_normal((args.rows, args.features))
    logit = X[:, 0] - 0.5 * X[:, 1] + 0.8 * X[:, 2] * X[:, 3]
    y = (rng.random(args.rows) < 1 / (1 + np.exp(-logit))).astype(np.float64)
    n_sub = max(1, int(np.sqrt(args.features)))

    backends = kernels.available_backends()
    if len(backends) > 1:
        a = _grow("cython", X, y, args.depth, args.min_leaf, n_sub, 7)
        b = _grow("python", X, y, args.depth, args.min_leaf, n_sub, 7)
        same = all(np.array_equal(u, v) for u, v in zip(a, b))
        print(f"backends agree: {same}")
    print(f"{args.trees} trees, {args.rows} x {args.features}, depth {args.depth}, min_leaf {args.min_leaf}")
    print(f"{'backend':<8} {'grow (s)':>10} {'apply (s)':>10} {'ms/tree':>9}")
    results = {}
    for name in backends:
        g, a = bench(name, X, y, args.trees, args.depth, args.min_leaf, n_sub, args.repeat)
        results[name] = g
        print(f"{name:<8} {g:>10.3f} {a:>10.3f} {1000 * g / args.trees:>9.2f}")
    if "cython" in results:
        print(f"speedup (grow): {results['python'] / results['cython']:.1f}x")


if __name__ == "__main__":
    main()
