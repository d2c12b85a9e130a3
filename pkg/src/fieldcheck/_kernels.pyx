# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernels. Semantics mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

cnp.import_array()

DEF GINI = 0
DEF MSE = 1


cdef inline uint64_t splitmix64(uint64_t x) noexcept nogil:
    x = x + <uint64_t>0x9E3779B97F4A7C15
    x = (x ^ (x >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    x = (x ^ (x >> 27)) * <uint64_t>0x94D049BB133111EB
    return x ^ (x >> 31)


cdef inline uint64_t feature_key(uint64_t seed, uint64_t node, uint64_t f) noexcept nogil:
    return splitmix64(splitmix64(seed + node) + f)


def build_tree(
    const double[:, ::1] X,
    const double[::1] target,
    const double[::1] num,
    const double[::1] den,
    int64_t[:, ::1] order,
    int criterion,
    int max_depth,
    int min_leaf,
    int n_sub,
    uint64_t seed,
    double prior_num,
    double prior_den,
):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t cap = 2 * n - 1
    cdef Py_ssize_t depth_cap
    if max_depth < 62:
        depth_cap = (<Py_ssize_t>1 << (max_depth + 1)) - 1
        if depth_cap < cap:
            cap = depth_cap
    if cap < 1:
        cap = 1

    feature_arr = np.full(cap, -1, dtype=np.int64)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.int64)
    right_arr = np.full(cap, -1, dtype=np.int64)
    value_arr = np.zeros(cap, dtype=np.float64)
    count_arr = np.zeros(cap, dtype=np.int64)
    cdef int64_t[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef int64_t[::1] left = left_arr
    cdef int64_t[::1] right = right_arr
    cdef double[::1] value = value_arr
    cdef int64_t[::1] count = count_arr

    # explicit stack of (start, end, depth, parent, is_left)
    cdef int64_t* st_start = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef int64_t* st_end = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef int64_t* st_depth = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef int64_t* st_parent = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef int64_t* st_isleft = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef int64_t* tmp = <int64_t*> malloc((n + 1) * sizeof(int64_t))
    cdef unsigned char* goes_left = <unsigned char*> malloc((n + 1) * sizeof(unsigned char))
    cdef uint64_t* keys = <uint64_t*> malloc((d + 1) * sizeof(uint64_t))
    cdef unsigned char* chosen = <unsigned char*> malloc((d + 1) * sizeof(unsigned char))

    cdef Py_ssize_t top = 0, n_nodes = 0
    cdef Py_ssize_t node, start, end, m, depth, parent, i, j, f, r, k, best_f, nl_count
    cdef int64_t idx, prev_idx
    cdef double s_num, s_den, pos, total, cl, nl, nr, pl, ql, pr, qr, gl, gr, score
    cdef double best_score, best_thr, xa, xb, thr, tmin, tmax
    cdef bint leaf
    cdef uint64_t kbest

    if (st_start == NULL or st_end == NULL or st_depth == NULL or st_parent == NULL
            or st_isleft == NULL or tmp == NULL or goes_left == NULL or keys == NULL or chosen == NULL):
        free(st_start); free(st_end); free(st_depth); free(st_parent); free(st_isleft)
        free(tmp); free(goes_left); free(keys); free(chosen)
        raise MemoryError()

    with nogil:
        st_start[0] = 0
        st_end[0] = n
        st_depth[0] = 0
        st_parent[0] = -1
        st_isleft[0] = 0
        top = 1
        while top > 0:
            top -= 1
            start = st_start[top]
            end = st_end[top]
            depth = st_depth[top]
            parent = st_parent[top]
            node = n_nodes
            n_nodes += 1
            if parent >= 0:
                if st_isleft[top]:
                    left[parent] = node
                else:
                    right[parent] = node
            m = end - start
            count[node] = m

            s_num = 0.0
            s_den = 0.0
            pos = 0.0
            tmin = target[order[0, start]]
            tmax = tmin
            for i in range(start, end):
                idx = order[0, i]
                s_num = s_num + num[idx]
                s_den = s_den + den[idx]
                pos = pos + target[idx]
                if target[idx] < tmin:
                    tmin = target[idx]
                if target[idx] > tmax:
                    tmax = target[idx]
            if s_den + prior_den != 0.0:
                value[node] = (s_num + prior_num) / (s_den + prior_den)
            else:
                value[node] = 0.0

            leaf = depth >= max_depth or m < 2 * min_leaf
            if not leaf:
                if criterion == GINI:
                    leaf = pos == 0.0 or pos == <double>m
                else:
                    leaf = tmin == tmax
            if leaf:
                continue

            # feature subset for this node
            if n_sub >= d:
                for f in range(d):
                    chosen[f] = 1
            else:
                for f in range(d):
                    chosen[f] = 0
                    keys[f] = feature_key(seed, <uint64_t>node, <uint64_t>f)
                for k in range(n_sub):
                    best_f = -1
                    for f in range(d):
                        if chosen[f]:
                            continue
                        if best_f < 0 or keys[f] < kbest:
                            best_f = f
                            kbest = keys[f]
                    chosen[best_f] = 1

            best_f = -1
            best_score = 0.0
            best_thr = 0.0
            for f in range(d):
                if not chosen[f]:
                    continue
                total = 0.0
                for i in range(start, end):
                    total = total + target[order[f, i]]
                cl = 0.0
                for i in range(start + 1, end):
                    prev_idx = order[f, i - 1]
                    cl = cl + target[prev_idx]
                    r = i - start
                    if r < min_leaf or m - r < min_leaf:
                        continue
                    xa = X[prev_idx, f]
                    xb = X[order[f, i], f]
                    if not (xa < xb):
                        continue
                    nl = <double>r
                    nr = <double>(m - r)
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
                    if best_f < 0 or score < best_score:
                        best_f = f
                        best_score = score
                        thr = (xa + xb) * 0.5
                        if thr == xb:
                            thr = xa
                        best_thr = thr

            if best_f < 0:
                continue

            feature[node] = best_f
            threshold[node] = best_thr
            nl_count = 0
            for i in range(start, end):
                idx = order[best_f, i]
                if X[idx, best_f] <= best_thr:
                    goes_left[idx] = 1
                    nl_count += 1
                else:
                    goes_left[idx] = 0
            for f in range(d):
                j = 0
                for i in range(start, end):
                    idx = order[f, i]
                    if goes_left[idx]:
                        tmp[j] = idx
                        j += 1
                for i in range(start, end):
                    idx = order[f, i]
                    if not goes_left[idx]:
                        tmp[j] = idx
                        j += 1
                memcpy(&order[f, start], tmp, m * sizeof(int64_t))

            # right pushed first so the left subtree gets the next ids
            st_start[top] = start + nl_count
            st_end[top] = end
            st_depth[top] = depth + 1
            st_parent[top] = node
            st_isleft[top] = 0
            top += 1
            st_start[top] = start
            st_end[top] = start + nl_count
            st_depth[top] = depth + 1
            st_parent[top] = node
            st_isleft[top] = 1
            top += 1

    free(st_start); free(st_end); free(st_depth); free(st_parent); free(st_isleft)
    free(tmp); free(goes_left); free(keys); free(chosen)
    return (
        feature_arr[:n_nodes].copy(),
        threshold_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        value_arr[:n_nodes].copy(),
        count_arr[:n_nodes].copy(),
    )


def apply_tree(
    const double[:, ::1] X,
    const int64_t[::1] feature,
    const double[::1] threshold,
    const int64_t[::1] left,
    const int64_t[::1] right,
    const double[::1] value,
):
    cdef Py_ssize_t n = X.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef int64_t node
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = value[node]
    return out_arr
