"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``CREDSYNTH_DISABLE_NUMBA=1`` before import to force the numpy versions.
Both versions of every kernel are importable under ``*_numba`` / ``*_numpy``
names so tests and ``benchmarks/bench_kernels.py`` can compare them directly.
"""
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = HAS_NUMBA and os.environ.get("CREDSYNTH_DISABLE_NUMBA", "0") not in ("1", "true", "yes")
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# ECDF sup-distance between two sorted samples


@njit(cache=True)
def ecdf_distance_numba(a, b):
    na = a.shape[0]
    nb = b.shape[0]
    i = 0
    j = 0
    d = 0.0
    while i < na or j < nb:
        if j >= nb or (i < na and a[i] <= b[j]):
            v = a[i]
        else:
            v = b[j]
        while i < na and a[i] <= v:
            i += 1
        while j < nb and b[j] <= v:
            j += 1
        gap = abs(i / na - j / nb)
        if gap > d:
            d = gap
    return d


def ecdf_distance_numpy(a, b):
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.shape[0]
    fb = np.searchsorted(b, pooled, side="right") / b.shape[0]
    return float(np.max(np.abs(fa - fb)))


# ---------------------------------------------------------------------------
# Mann-Whitney AUC with mid-ranks for ties


@njit(cache=True)
def rank_auc_numba(scores, labels):
    n = scores.shape[0]
    order = np.argsort(scores, kind="mergesort")
    rank_sum = 0.0
    n_pos = 0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        # ranks i+1 .. j+1 share their average
        mid = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            if labels[order[k]] == 1:
                rank_sum += mid
                n_pos += 1
        i = j + 1
    n_neg = n - n_pos
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def rank_auc_numpy(scores, labels):
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    n = s.shape[0]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], n] - 1
    mids = 0.5 * (starts + ends) + 1.0
    ranks = np.repeat(mids, ends - starts + 1)
    pos = labels[order] == 1
    n_pos = int(pos.sum())
    n_neg = n - n_pos
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# Level-wise exact greedy split search for regression trees on residuals
#
# order[f] holds row indices sorted by X[:, f] and xs[f] the matching sorted
# values (xs[f, t] == X[order[f, t], f]); node[i] is the open node a row
# belongs to (-1 when the row is out of play). A split sends x <= threshold left.
# Gain is the squared-error reduction sum_L^2/n_L + sum_R^2/n_R - sum^2/n.
# Features are scanned in ascending index and thresholds in ascending value;
# a candidate replaces the incumbent only if it wins by more than TIE_TOL
# (relative), so gains that tie up to summation order resolve the same way in
# both versions.

TIE_TOL = 1e-12


@njit(cache=True)
def best_splits_numba(xs, order, node, resid, n_nodes, min_leaf):
    n_feat = xs.shape[0]
    tot_n = np.zeros(n_nodes, np.int64)
    tot_s = np.zeros(n_nodes)
    for i in range(node.shape[0]):
        k = node[i]
        if k >= 0:
            tot_n[k] += 1
            tot_s[k] += resid[i]
    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, np.int64)
    best_thr = np.zeros(n_nodes)
    run_n = np.zeros(n_nodes, np.int64)
    run_s = np.zeros(n_nodes)
    last = np.zeros(n_nodes)
    for f in range(n_feat):
        run_n[:] = 0
        run_s[:] = 0.0
        col = order[f]
        vals = xs[f]
        for t in range(col.shape[0]):
            i = col[t]
            k = node[i]
            if k < 0:
                continue
            x = vals[t]
            nl = run_n[k]
            if nl > 0 and x != last[k] and nl >= min_leaf and tot_n[k] - nl >= min_leaf:
                sl = run_s[k]
                nr = tot_n[k] - nl
                sr = tot_s[k] - sl
                gain = sl * sl / nl + sr * sr / nr - tot_s[k] * tot_s[k] / tot_n[k]
                if gain > best_gain[k] + TIE_TOL * max(1.0, best_gain[k]):
                    best_gain[k] = gain
                    best_feat[k] = f
                    best_thr[k] = last[k]
            run_n[k] = nl + 1
            run_s[k] += resid[i]
            last[k] = x
    return best_gain, best_feat, best_thr


def best_splits_numpy(xs, order, node, resid, n_nodes, min_leaf):
    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, np.int64)
    best_thr = np.zeros(n_nodes)
    for f in range(xs.shape[0]):
        col = order[f]
        node_col = node[col]
        for k in range(n_nodes):
            in_node = node_col == k
            idx = col[in_node]
            m = idx.shape[0]
            if m < 2 * min_leaf:
                continue
            v = xs[f][in_node]
            cs = np.cumsum(resid[idx])
            total = cs[-1]
            # candidate after position p (0-based): left = rows 0..p
            p = np.flatnonzero(v[1:] != v[:-1])
            nl = p + 1
            ok = (nl >= min_leaf) & (m - nl >= min_leaf)
            p = p[ok]
            if p.shape[0] == 0:
                continue
            nl = (p + 1).astype(np.float64)
            sl = cs[p]
            sr = total - sl
            gain = sl * sl / nl + sr * sr / (m - nl) - total * total / m
            # first candidate within rounding of the best, matching the scan order of the loop version
            top = gain.max()
            j = int(np.argmax(gain >= top - TIE_TOL * max(1.0, top)))
            if gain[j] > best_gain[k] + TIE_TOL * max(1.0, best_gain[k]):
                best_gain[k] = gain[j]
                best_feat[k] = f
                best_thr[k] = v[p[j]]
    return best_gain, best_feat, best_thr


# ---------------------------------------------------------------------------
# Summed output of a forest stored as flat arrays
#
# Trees are concatenated; roots[t] is the node index of tree t's root. Leaves
# carry feature == -1.


@njit(cache=True)
def forest_apply_numba(X, roots, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.zeros(n)
    for t in range(roots.shape[0]):
        r = roots[t]
        for i in range(n):
            k = r
            while feature[k] >= 0:
                if X[i, feature[k]] <= threshold[k]:
                    k = left[k]
                else:
                    k = right[k]
            out[i] += value[k]
    return out


def forest_apply_numpy(X, roots, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.zeros(n)
    rows = np.arange(n)
    for r in roots:
        k = np.full(n, r, dtype=np.int64)
        inner = feature[k] >= 0
        while inner.any():
            ki = k[inner]
            go_left = X[rows[inner], feature[ki]] <= threshold[ki]
            k[inner] = np.where(go_left, left[ki], right[ki])
            inner = feature[k] >= 0
        out += value[k]
    return out


if USE_NUMBA:
    ecdf_distance = ecdf_distance_numba
    rank_auc = rank_auc_numba
    best_splits = best_splits_numba
    forest_apply = forest_apply_numba
else:
    ecdf_distance = ecdf_distance_numpy
    rank_auc = rank_auc_numpy
    best_splits = best_splits_numpy
    forest_apply = forest_apply_numpy
