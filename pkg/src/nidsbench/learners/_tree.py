"""Jitted CART construction (Gini impurity) and traversal.

A tree is stored as flat arrays: ``feature`` (-1 for leaves), ``threshold``
(go left when ``x <= threshold``), ``left``/``right`` child ids and a
``value`` matrix with the weighted class counts of each node.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _grow(arr, n):
    out = np.empty(n, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(cache=True)
def _grow2(arr, n):
    out = np.zeros((n, arr.shape[1]), dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(cache=True, nogil=True)
def build_tree(X, y, w, idx, n_classes, max_features, min_samples_split, max_depth, seed):
    """Grow a tree on rows ``idx`` of ``X``.

    ``max_features >= n_features`` visits features in column order, so the
    result does not depend on ``seed``; otherwise features are drawn in a
    seeded random order and the search continues past ``max_features`` until
    a valid split appears. ``max_depth < 0`` means unbounded.
    """
    np.random.seed(seed)
    n_features = X.shape[1]
    cap = 64
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_classes), dtype=np.float64)

    idx = idx.copy()
    # work stack: node id, start, end, depth
    stack = np.empty((64, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = idx.shape[0]
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    counts_left = np.zeros(n_classes, dtype=np.float64)
    order_feats = np.arange(n_features)
    xs = np.empty(idx.shape[0], dtype=np.float64)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        n_node = end - start

        total = np.zeros(n_classes, dtype=np.float64)
        for i in range(start, end):
            total[y[idx[i]]] += w[idx[i]]
        value[node] = total
        w_tot = total.sum()
        n_nonzero = 0
        for k in range(n_classes):
            if total[k] > 0:
                n_nonzero += 1
        if n_nonzero <= 1 or n_node < min_samples_split or (max_depth >= 0 and depth >= max_depth):
            continue

        if max_features < n_features:
            order_feats = np.random.permutation(n_features)
        else:
            order_feats = np.arange(n_features)

        best_score = -1.0
        best_feat = -1
        best_thr = 0.0

        visited = 0
        for fi in range(n_features):
            if visited >= max_features and best_feat >= 0:
                break
            f = order_feats[fi]
            seg = idx[start:end]
            for i in range(n_node):
                xs[i] = X[seg[i], f]
            order = np.argsort(xs[:n_node], kind="mergesort")
            lo = xs[order[0]]
            hi = xs[order[n_node - 1]]
            if hi <= lo:
                continue
            visited += 1
            counts_left[:] = 0.0
            sq_left = 0.0
            sq_right = 0.0
            for k in range(n_classes):
                sq_right += total[k] * total[k]
            w_left = 0.0
            for p in range(n_node - 1):
                r = seg[order[p]]
                cls = y[r]
                wr = w[r]
                cl = counts_left[cls]
                cr = total[cls] - cl
                sq_left += 2.0 * wr * cl + wr * wr
                sq_right += -2.0 * wr * cr + wr * wr
                counts_left[cls] = cl + wr
                w_left += wr
                x0 = xs[order[p]]
                x1 = xs[order[p + 1]]
                if x1 <= x0:
                    continue
                w_right = w_tot - w_left
                score = sq_left / w_left + sq_right / w_right
                if score > best_score:
                    best_score = score
                    best_feat = f
                    thr = 0.5 * (x0 + x1)
                    if thr >= x1 or thr < x0:
                        thr = x0
                    best_thr = thr
        if best_feat < 0:
            continue

        # partition idx[start:end] in place
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_feat] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i

        if n_nodes + 2 > feature.shape[0]:
            new_cap = feature.shape[0] * 2
            feature = _grow(feature, new_cap)
            feature[n_nodes:] = -1
            threshold = _grow(threshold, new_cap)
            left = _grow(left, new_cap)
            left[n_nodes:] = -1
            right = _grow(right, new_cap)
            right[n_nodes:] = -1
            value = _grow2(value, new_cap)
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid

        if top + 2 > stack.shape[0]:
            bigger = np.empty((stack.shape[0] * 2, 4), dtype=np.int64)
            bigger[:top] = stack[:top]
            stack = bigger
        stack[top, 0] = rid
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf id reached by every row."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def argmax_lowest(scores):
    """Row-wise argmax; ties resolve to the lowest column."""
    n, k = scores.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = 0
        for j in range(1, k):
            if scores[i, j] > scores[i, best]:
                best = j
        out[i] = best
    return out
