"""Pure numpy tree kernels, used when the compiled extension is unavailable.

Every floating-point accumulation happens in the same sequential order as
in ``_kernels.pyx`` so both backends grow bit-identical trees.
"""

from __future__ import annotations

import numpy as np

GINI = 0
MSE = 1
_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def feature_key(seed: int, node: int, f: int) -> int:
    return splitmix64((splitmix64((seed + node) & _MASK) + f) & _MASK)


def _seq_sum(values: np.ndarray) -> float:
    # np.sum is pairwise; cumsum is strictly left to right
    return float(np.cumsum(values)[-1]) if len(values) else 0.0


def _chosen_features(seed: int, node: int, d: int, n_sub: int) -> np.ndarray:
    if n_sub >= d:
        return np.arange(d)
    keys = sorted((feature_key(seed, node, f), f) for f in range(d))
    return np.sort(np.array([f for _, f in keys[:n_sub]], dtype=np.int64))


def _best_split(X, target, block, feats, min_leaf, criterion):
    """Best (feature, threshold) over ``feats`` for the node rows in ``block``.

    ``block`` is the node's (d, m) slice of the presorted index matrix.
    Ties go to the lowest feature, then the lowest threshold.
    """
    m = block.shape[1]
    rows = block[feats]                                   # (k, m)
    xs = X[rows, feats[:, None]]
    ts = target[rows]
    cs = np.cumsum(ts, axis=1)
    total = cs[:, -1:]
    cl = cs[:, :-1]                                       # left sums for left sizes 1..m-1
    r = np.arange(1, m)
    nl = r.astype(np.float64)
    nr = (m - r).astype(np.float64)
    valid = (r >= min_leaf) & (m - r >= min_leaf)
    valid = valid[None, :] & (xs[:, :-1] < xs[:, 1:])
    if not valid.any():
        return -1, 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == GINI:
            pl = cl
            ql = nl - pl
            pr = total - cl
            qr = nr - pr
            gl = nl - (pl * pl + ql * ql) / nl
            gr = nr - (pr * pr + qr * qr) / nr
            score = gl + gr
        else:
            pr = total - cl
            score = -(cl * cl / nl + pr * pr / nr)
    score = np.where(valid, score, np.inf)
    flat = int(np.argmin(score))
    fi, pos = divmod(flat, m - 1)
    if not np.isfinite(score[fi, pos]):
        return -1, 0.0
    xa = xs[fi, pos]
    xb = xs[fi, pos + 1]
    thr = (xa + xb) * 0.5
    if thr == xb:
        thr = xa
    return int(feats[fi]), float(thr)


def build_tree(X, target, num, den, order, criterion, max_depth, min_leaf, n_sub, seed, prior_num, prior_den):
    n, d = X.shape
    feature, threshold, left, right, value, count = [], [], [], [], [], []
    stack = [(0, n, 0, -1, False)]
    while stack:
        start, end, depth, parent, is_left = stack.pop()
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        m = end - start
        count.append(m)

        rows0 = order[0, start:end]
        s_num = _seq_sum(num[rows0])
        s_den = _seq_sum(den[rows0])
        denom = s_den + prior_den
        value.append((s_num + prior_num) / denom if denom != 0.0 else 0.0)

        if depth >= max_depth or m < 2 * min_leaf:
            continue
        t = target[rows0]
        if criterion == GINI:
            pos = _seq_sum(t)
            if pos == 0.0 or pos == float(m):
                continue
        elif t.min() == t.max():
            continue

        block = order[:, start:end]
        feats = _chosen_features(seed, node, d, n_sub)
        best_f, thr = _best_split(X, target, block, feats, min_leaf, criterion)
        if best_f < 0:
            continue
        feature[node] = best_f
        threshold[node] = thr

        goes_left = X[block, best_f] <= thr              # (d, m); every row holds the same sample set
        nl = int(goes_left[0].sum())
        order[:, start:end] = np.concatenate(
            [block[goes_left].reshape(d, nl), block[~goes_left].reshape(d, m - nl)], axis=1
        )
        stack.append((start + nl, end, depth + 1, node, False))
        stack.append((start, start + nl, depth + 1, node, True))

    return (
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
        np.array(count, dtype=np.int64),
    )


def apply_tree(X, feature, threshold, left, right, value):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        cur = node[idx]
        go_left = X[idx, feature[cur]] <= threshold[cur]
        node[idx] = np.where(go_left, left[cur], right[cur])
        active[idx] = feature[node[idx]] >= 0
    return value[node].copy()
