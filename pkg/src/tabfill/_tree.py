"""Numba kernels for exact greedy regression-tree growth and traversal.

The grower is shared by the regression and classification boosters: it fits
the tree structure to a target vector (residuals or negative gradients) by
exact greedy variance reduction over sorted feature values, and assigns each
leaf sum(numer) / (sum(denom) + l2).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def grow_tree(x, numer, denom, feat_ids, l2, max_depth, min_leaf):
    """Grow one tree; returns flat node arrays plus the node count.

    ``feature[node] == -1`` marks a leaf. Splits maximize
    sum_L^2/n_L + sum_R^2/n_R of ``numer`` over candidates between distinct
    sorted values; ties resolve to the lowest feature id, then the lowest
    threshold. Nodes whose targets are all equal become leaves.
    """
    n = x.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.zeros(cap, np.int64)
    right = np.zeros(cap, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    idx = np.arange(n)
    stack = np.empty((cap, 4), np.int64)  # node, start, end, depth
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start
        count[node] = m
        sn = 0.0
        sd = 0.0
        tmin = numer[idx[start]]
        tmax = tmin
        for ii in range(start, end):
            i = idx[ii]
            sn += numer[i]
            sd += denom[i]
            v = numer[i]
            if v < tmin:
                tmin = v
            if v > tmax:
                tmax = v
        if tmin == tmax:
            # reordering keeps constant targets exact when l2 == 0
            value[node] = tmin * (m / (sd + l2))
            continue
        value[node] = sn / (sd + l2)
        if depth >= max_depth or m < 2 * min_leaf:
            continue
        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        vals = np.empty(m)
        tv = np.empty(m)
        for fi in range(feat_ids.shape[0]):
            f = feat_ids[fi]
            for ii in range(m):
                vals[ii] = x[idx[start + ii], f]
            order = np.argsort(vals)
            stot = 0.0
            for ii in range(m):
                tv[ii] = numer[idx[start + order[ii]]]
                stot += tv[ii]
            s = 0.0
            for ii in range(m - 1):
                s += tv[ii]
                lo = vals[order[ii]]
                hi = vals[order[ii + 1]]
                nl = ii + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf or lo == hi:
                    continue
                sc = s * s / nl + (stot - s) * (stot - s) / nr
                if sc > best_score:
                    best_score = sc
                    best_f = f
                    thr = 0.5 * (lo + hi)
                    if thr >= hi:  # adjacent floats: keep the split non-empty
                        thr = lo
                    best_thr = thr
        if best_f < 0:
            continue
        tmp = np.empty(m, np.int64)
        nl = 0
        for ii in range(start, end):
            if x[idx[ii], best_f] <= best_thr:
                tmp[nl] = idx[ii]
                nl += 1
        nr = nl
        for ii in range(start, end):
            if x[idx[ii], best_f] > best_thr:
                tmp[nr] = idx[ii]
                nr += 1
        for ii in range(m):
            idx[start + ii] = tmp[ii]
        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        stack[top, 0] = lc
        stack[top, 1] = start
        stack[top, 2] = start + nl
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = rc
        stack[top, 1] = start + nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
    return feature, threshold, left, right, value, count, n_nodes


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, x, out):
    for i in range(x.shape[0]):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
