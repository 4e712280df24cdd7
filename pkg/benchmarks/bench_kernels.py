"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 20000]

Both variants run on identical inputs; the script checks that they agree
before timing, and reports the best-of-``repeat`` wall time for each. The
numba column includes no compilation time (one warm-up call per kernel).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from credsynth import _kernels as K
from credsynth.models import FitConfig, fit_gbdt


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _split_inputs(n, n_feat, rng):
    X = rng.normal(size=(n, n_feat))
    X[:, 0] = np.round(X[:, 0], 1)  # plenty of ties
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="mergesort").T)
    xs = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    node = rng.integers(0, 4, n).astype(np.int64)
    resid = rng.normal(size=n)
    return xs, order, node, resid


def _forest_inputs(n, rng, n_trees=200, n_feat=10):
    cfg = FitConfig(kind="gbdt", n_trees=n_trees, max_depth=3, seed=0)
    X = rng.normal(size=(5000, n_feat))
    y = (X[:, 0] + 0.5 * X[:, 1] ** 2 + rng.normal(size=5000) > 0.5).astype(np.int64)
    m = fit_gbdt(X, y, cfg)
    Xt = rng.normal(size=(n, n_feat))
    return Xt, m.roots, m.feature, m.threshold, m.left, m.right, m.value


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=20000)
    args = ap.parse_args(argv)
    if not K.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    n = args.n

    a = np.sort(rng.normal(size=n))
    b = np.sort(rng.normal(0.05, 1.1, size=n))
    scores = np.round(rng.normal(size=n), 2)
    labels = (rng.random(n) < 0.3).astype(np.int64)
    split_args = _split_inputs(n, 10, rng)
    forest_args = _forest_inputs(n, rng)

    cases = [
        ("ecdf_distance", (a, b), K.ecdf_distance_numba, K.ecdf_distance_numpy),
        ("rank_auc", (scores, labels), K.rank_auc_numba, K.rank_auc_numpy),
        ("best_splits", (*split_args, 4, 20), K.best_splits_numba, K.best_splits_numpy),
        ("forest_apply", forest_args, K.forest_apply_numba, K.forest_apply_numpy),
    ]
    print(f"n = {n}, best of {args.repeat}")
    print(f"{'kernel':<15}{'numba (ms)':>12}{'numpy (ms)':>12}{'speedup':>10}")
    for name, inputs, fast, slow in cases:
        r_fast, r_slow = fast(*inputs), slow(*inputs)  # also warms up the jit
        if not isinstance(r_fast, tuple):
            r_fast, r_slow = (r_fast,), (r_slow,)
        for u, v in zip(r_fast, r_slow):
            if not np.allclose(u, v, rtol=1e-9, atol=1e-12):
                raise SystemExit(f"{name}: numba and numpy disagree")
        t_fast = _best(lambda: fast(*inputs), args.repeat)
        t_slow = _best(lambda: slow(*inputs), args.repeat)
        print(f"{name:<15}{1e3 * t_fast:>12.2f}{1e3 * t_slow:>12.2f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
