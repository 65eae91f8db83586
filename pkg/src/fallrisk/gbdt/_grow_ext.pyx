# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled leaf-wise tree grower.

Mirrors ``_grow_py.grow_tree`` operation for operation; see that module for
the arithmetic contract that keeps both backends bit-identical.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport isnan

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.intp_t intp


cdef inline double _midpoint(double a, double b) noexcept nogil:
    cdef double t = (a + b) / 2.0
    if t >= b:
        return a
    return t


cdef void _totals(const intp[:, ::1] order, const double[::1] g, const double[::1] h,
                  intp start, intp end, double* G, double* H) noexcept nogil:
    cdef double sg = 0.0, sh = 0.0
    cdef intp i, idx
    for i in range(start, end):
        idx = order[0, i]
        sg = sg + g[idx]
        sh = sh + h[idx]
    G[0] = sg
    H[0] = sh


cdef int _best_split(const double[:, ::1] X, const intp[:, ::1] order,
                     const double[::1] g, const double[::1] h,
                     intp start, intp end, double G, double H,
                     intp min_leaf, double lam,
                     double* out_gain, intp* out_feature, double* out_threshold,
                     intp* out_nleft) noexcept nogil:
    cdef intp m = end - start
    cdef intp F = X.shape[1]
    cdef intp f, i, idx, nxt, nl
    cdef double GL, HL, GR, HR, gain, parent, xa, xb
    cdef double best = -1.0
    cdef intp best_f = -1, best_i = -1
    cdef int found = 0
    if m < 2 * min_leaf:
        return 0
    parent = G * G / (H + lam)
    for f in range(F):
        GL = 0.0
        HL = 0.0
        for i in range(start, end - 1):
            idx = order[f, i]
            GL = GL + g[idx]
            HL = HL + h[idx]
            nl = i - start + 1
            if nl < min_leaf:
                continue
            if m - nl < min_leaf:
                break
            nxt = order[f, i + 1]
            xa = X[idx, f]
            xb = X[nxt, f]
            if not (xa < xb):
                continue
            GR = G - GL
            HR = H - HL
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent)
            if isnan(gain):
                continue
            if not found or gain > best:
                found = 1
                best = gain
                best_f = f
                best_i = i
    if not found or not (best > 0):
        return 0
    out_gain[0] = best
    out_feature[0] = best_f
    out_threshold[0] = _midpoint(X[order[best_f, best_i], best_f], X[order[best_f, best_i + 1], best_f])
    out_nleft[0] = best_i - start + 1
    return 1


cdef intp _partition(const double[:, ::1] X, intp[:, ::1] order, intp[::1] tmp,
                     unsigned char[::1] mark, intp start, intp end,
                     intp feature, double threshold) noexcept nogil:
    cdef intp F = X.shape[1]
    cdef intp f, i, j, idx, nl = 0, nr
    for i in range(start, end):
        idx = order[0, i]
        mark[idx] = X[idx, feature] <= threshold
        nl = nl + mark[idx]
    for f in range(F):
        nr = 0
        i = start
        for j in range(start, end):
            idx = order[f, j]
            if mark[idx]:
                order[f, i] = idx
                i = i + 1
            else:
                tmp[nr] = idx
                nr = nr + 1
        for j in range(nr):
            order[f, i + j] = tmp[j]
    return nl


def grow_tree(X, order, g, h, int max_leaves, int max_depth, int min_samples_leaf, double lambda_l2):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef intp[:, ::1] ov = order
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef intp n = Xv.shape[0]
    cdef intp cap = 2 * max_leaves - 1

    feature_a = np.full(cap, -1, dtype=np.intp)
    threshold_a = np.zeros(cap)
    left_a = np.full(cap, -1, dtype=np.intp)
    right_a = np.full(cap, -1, dtype=np.intp)
    value_a = np.zeros(cap)
    gain_a = np.zeros(cap)
    count_a = np.zeros(cap, dtype=np.intp)
    cdef intp[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef intp[::1] left = left_a
    cdef intp[::1] right = right_a
    cdef double[::1] value = value_a
    cdef double[::1] gain = gain_a
    cdef intp[::1] count = count_a

    cdef intp[::1] start = np.zeros(cap, dtype=np.intp)
    cdef intp[::1] end = np.zeros(cap, dtype=np.intp)
    cdef intp[::1] depth = np.zeros(cap, dtype=np.intp)
    cdef double[::1] sumG = np.zeros(cap)
    cdef double[::1] sumH = np.zeros(cap)
    cdef unsigned char[::1] has_cand = np.zeros(cap, dtype=np.uint8)
    cdef double[::1] c_gain = np.zeros(cap)
    cdef intp[::1] c_feat = np.zeros(cap, dtype=np.intp)
    cdef double[::1] c_thr = np.zeros(cap)
    cdef intp[::1] c_nl = np.zeros(cap, dtype=np.intp)

    cdef intp[::1] tmp = np.empty(max(n, 1), dtype=np.intp)
    cdef unsigned char[::1] mark = np.zeros(max(n, 1), dtype=np.uint8)
    leaf_of_a = np.empty(n, dtype=np.intp)
    cdef intp[::1] leaf_of = leaf_of_a

    cdef intp n_nodes = 1, n_leaves = 1, node, nd, child, s, e, nl, k, i
    cdef double denom
    cdef intp min_leaf = min_samples_leaf
    cdef double lam = lambda_l2

    with nogil:
        start[0] = 0
        end[0] = n
        _totals(ov, gv, hv, 0, n, &sumG[0], &sumH[0])
        k = 0
        while True:
            # evaluate nodes k .. n_nodes-1 (new leaves)
            while k < n_nodes:
                denom = sumH[k] + lam
                if denom != 0:
                    value[k] = -(sumG[k] / denom)
                else:
                    value[k] = 0.0
                count[k] = end[k] - start[k]
                if max_depth < 0 or depth[k] < max_depth:
                    has_cand[k] = _best_split(Xv, ov, gv, hv, start[k], end[k], sumG[k], sumH[k],
                                              min_leaf, lam, &c_gain[k], &c_feat[k], &c_thr[k], &c_nl[k])
                k = k + 1
            if n_leaves >= max_leaves:
                break
            node = -1
            for nd in range(n_nodes):
                if has_cand[nd] and (node < 0 or c_gain[nd] > c_gain[node]):
                    node = nd
            if node < 0:
                break
            has_cand[node] = 0
            s = start[node]
            e = end[node]
            nl = _partition(Xv, ov, tmp, mark, s, e, c_feat[node], c_thr[node])
            feature[node] = c_feat[node]
            threshold[node] = c_thr[node]
            gain[node] = c_gain[node]
            left[node] = n_nodes
            right[node] = n_nodes + 1
            start[n_nodes] = s
            end[n_nodes] = s + nl
            start[n_nodes + 1] = s + nl
            end[n_nodes + 1] = e
            for child in range(n_nodes, n_nodes + 2):
                depth[child] = depth[node] + 1
                _totals(ov, gv, hv, start[child], end[child], &sumG[child], &sumH[child])
            n_nodes = n_nodes + 2
            n_leaves = n_leaves + 1

        for nd in range(n_nodes):
            if feature[nd] < 0:
                for i in range(start[nd], end[nd]):
                    leaf_of[ov[0, i]] = nd

    return {
        "feature": feature_a[:n_nodes],
        "threshold": threshold_a[:n_nodes],
        "left": left_a[:n_nodes],
        "right": right_a[:n_nodes],
        "value": value_a[:n_nodes],
        "gain": gain_a[:n_nodes],
        "count": count_a[:n_nodes],
        "leaf_of": leaf_of_a,
    }
