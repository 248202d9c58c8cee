# cython: language_level=3
"""Compiled kernels: covariance-update coordinate descent, histogram tree growth, tree traversal.

Semantics are defined by ``_kernels_py.py``; this module must stay in step
with it (accumulation order, tie-breaking and the splitmix64 stream).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, copysign
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t, uint8_t

cnp.import_array()

cdef double ZERO_SLACK = 1e-10


cdef inline uint64_t _splitmix_next(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


def cd_gram(double[::1, :] G, double[::1] c, double[::1] beta, double lam, double[::1] pf,
            int max_sweeps, double tol):
    """Cyclic coordinate descent on an L1-penalized quadratic by covariance updates.

    See ``_kernels_py.cd_gram`` for the contract.
    """
    cdef Py_ssize_t m = beta.shape[0]
    cdef Py_ssize_t i, j
    cdef int sweeps = 0
    cdef bint converged = False, full = True
    cdef double a, old, g, thr, ag, new, d, change, max_change, acc
    q_a = np.zeros(m, dtype=np.float64)
    cdef double[::1] q = q_a
    with nogil:
        # q = G @ beta, column by column in index order
        for j in range(m):
            if beta[j] != 0.0:
                for i in range(m):
                    q[i] += G[i, j] * beta[j]
        while sweeps < max_sweeps:
            sweeps += 1
            max_change = 0.0
            for j in range(m):
                if not full and beta[j] == 0.0 and pf[j] != 0.0:
                    continue
                a = G[j, j]
                if a <= 0.0:
                    continue
                old = beta[j]
                g = c[j] - q[j] + a * old
                thr = lam * pf[j]
                ag = fabs(g)
                if ag <= thr * (1.0 + ZERO_SLACK):
                    new = 0.0
                else:
                    new = copysign(ag - thr, g) / a
                d = new - old
                if d != 0.0:
                    for i in range(m):
                        q[i] += d * G[i, j]
                    beta[j] = new
                    change = a * d * d
                    if change > max_change:
                        max_change = change
            if max_change < tol:
                if full:
                    converged = True
                    break
                full = True
            else:
                full = False
    return sweeps, converged


def build_tree(const uint8_t[::1, :] Xb, const int64_t[::1] n_bins, const double[::1] t,
               const double[::1] w, rows_in, int max_depth, double min_leaf_weight,
               int max_features, uint64_t seed):
    """Grow a binary tree on binned features; see ``_kernels_py.build_tree``."""
    cdef Py_ssize_t n_features = Xb.shape[1]
    cdef cnp.ndarray[int64_t, ndim=1] rows_arr = np.array(rows_in, dtype=np.int64, copy=True)
    cdef int64_t[::1] rows = rows_arr
    cdef Py_ssize_t n_rows = rows.shape[0]
    cdef Py_ssize_t cap = 2 * n_rows + 1
    cdef int m = <int>n_features
    if 0 < max_features < n_features:
        m = max_features

    feature_a = np.full(cap, -1, dtype=np.int64)
    bin_a = np.full(cap, -1, dtype=np.int64)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    value_a = np.zeros(cap, dtype=np.float64)
    weight_a = np.zeros(cap, dtype=np.float64)
    cdef int64_t[::1] feature = feature_a
    cdef int64_t[::1] split_bin = bin_a
    cdef int64_t[::1] left = left_a
    cdef int64_t[::1] right = right_a
    cdef double[::1] value = value_a
    cdef double[::1] weight = weight_a

    cdef int64_t max_bins = 1
    cdef Py_ssize_t f
    for f in range(n_features):
        if n_bins[f] > max_bins:
            max_bins = n_bins[f]

    cdef double* hw = <double*>malloc(max_bins * sizeof(double))
    cdef double* hs = <double*>malloc(max_bins * sizeof(double))
    cdef int64_t* perm = <int64_t*>malloc(n_features * sizeof(int64_t))
    cdef int64_t* buf = <int64_t*>malloc((n_rows + 1) * sizeof(int64_t))
    cdef int64_t* st_node = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef int64_t* st_start = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef int64_t* st_end = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef int64_t* st_depth = <int64_t*>malloc(cap * sizeof(int64_t))

    cdef uint64_t state = seed
    cdef Py_ssize_t n_nodes = 1, top = 0
    cdef int64_t node, start, end, depth, ii, row, c, nb, b, best_f, best_b, n_left, pos_l, pos_r, lc, rc, kk, tmp
    cdef double W, S, Q, sse, parent, best_gain, WL, SL, WR, SR, gain, wv, tv
    cdef int i

    try:
        with nogil:
            st_node[0] = 0
            st_start[0] = 0
            st_end[0] = n_rows
            st_depth[0] = 0
            top = 1
            while top > 0:
                top -= 1
                node = st_node[top]
                start = st_start[top]
                end = st_end[top]
                depth = st_depth[top]

                W = 0.0
                S = 0.0
                Q = 0.0
                for ii in range(start, end):
                    row = rows[ii]
                    wv = w[row]
                    tv = t[row]
                    W += wv
                    S += wv * tv
                    Q += wv * tv * tv
                if W > 0.0:
                    value[node] = S / W
                else:
                    value[node] = 0.0
                weight[node] = W
                if W <= 0.0:
                    continue
                sse = Q - S * S / W
                if depth >= max_depth or W < 2.0 * min_leaf_weight or sse <= 1e-12 * W:
                    continue

                if m < n_features:
                    for kk in range(n_features):
                        perm[kk] = kk
                    for i in range(m):
                        kk = i + <int64_t>(_splitmix_next(&state) % <uint64_t>(n_features - i))
                        tmp = perm[i]
                        perm[i] = perm[kk]
                        perm[kk] = tmp
                else:
                    for kk in range(n_features):
                        perm[kk] = kk

                parent = S * S / W
                best_gain = 1e-14 * W
                best_f = -1
                best_b = -1
                for i in range(m):
                    f = perm[i]
                    nb = n_bins[f]
                    if nb < 2:
                        continue
                    for b in range(nb):
                        hw[b] = 0.0
                        hs[b] = 0.0
                    for ii in range(start, end):
                        row = rows[ii]
                        c = Xb[row, f]
                        wv = w[row]
                        hw[c] += wv
                        hs[c] += wv * t[row]
                    WL = 0.0
                    SL = 0.0
                    for b in range(nb - 1):
                        WL += hw[b]
                        SL += hs[b]
                        WR = W - WL
                        SR = S - SL
                        if WL < min_leaf_weight or WR < min_leaf_weight:
                            continue
                        gain = SL * SL / WL + SR * SR / WR - parent
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            best_b = b
                if best_f < 0:
                    continue

                # stable partition: left rows keep order, then right rows
                pos_l = start
                pos_r = 0
                for ii in range(start, end):
                    row = rows[ii]
                    if Xb[row, best_f] <= best_b:
                        rows[pos_l] = row
                        pos_l += 1
                    else:
                        buf[pos_r] = row
                        pos_r += 1
                for ii in range(pos_r):
                    rows[pos_l + ii] = buf[ii]
                n_left = pos_l - start

                feature[node] = best_f
                split_bin[node] = best_b
                lc = n_nodes
                rc = n_nodes + 1
                n_nodes += 2
                left[node] = lc
                right[node] = rc

                st_node[top] = rc
                st_start[top] = start + n_left
                st_end[top] = end
                st_depth[top] = depth + 1
                top += 1
                st_node[top] = lc
                st_start[top] = start
                st_end[top] = start + n_left
                st_depth[top] = depth + 1
                top += 1
    finally:
        free(hw)
        free(hs)
        free(perm)
        free(buf)
        free(st_node)
        free(st_start)
        free(st_end)
        free(st_depth)

    return (feature_a[:n_nodes].copy(), bin_a[:n_nodes].copy(), left_a[:n_nodes].copy(),
            right_a[:n_nodes].copy(), value_a[:n_nodes].copy(), weight_a[:n_nodes].copy())


def tree_apply(const double[:, :] X, const int64_t[::1] feature, const double[::1] threshold,
               const int64_t[::1] left, const int64_t[::1] right):
    """Leaf index reached by every row of ``X`` (goes left when ``x <= threshold``)."""
    cdef Py_ssize_t n = X.shape[0]
    out_a = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] out = out_a
    cdef Py_ssize_t i
    cdef int64_t node, f
    with nogil:
        for i in range(n):
            node = 0
            f = feature[node]
            while f >= 0:
                if X[i, f] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feature[node]
            out[i] = node
    return out_a
