# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph kernels.  Semantics mirror ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def betweenness(indptr, indices, Py_ssize_t n):
    cdef const long long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long long[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef Py_ssize_t nnz = ix.shape[0]
    cdef double[::1] cb = np.zeros(n, dtype=np.float64)
    cdef double[::1] sigma = np.empty(n, dtype=np.float64)
    cdef double[::1] delta = np.empty(n, dtype=np.float64)
    cdef long long[::1] dist = np.empty(n, dtype=np.int64)
    cdef long long[::1] queue = np.empty(max(n, 1), dtype=np.int64)
    # (v, w) pairs with v a shortest-path predecessor of w, in discovery order
    cdef long long[::1] pv = np.empty(max(nnz, 1), dtype=np.int64)
    cdef long long[::1] pw = np.empty(max(nnz, 1), dtype=np.int64)
    cdef Py_ssize_t s, v, w, k, head, tail, n_pairs

    for s in range(n):
        for v in range(n):
            sigma[v] = 0.0
            delta[v] = 0.0
            dist[v] = -1
        sigma[s] = 1.0
        dist[s] = 0
        head = 0
        tail = 0
        n_pairs = 0
        queue[tail] = s
        tail += 1
        while head < tail:
            v = queue[head]
            head += 1
            for k in range(ip[v], ip[v + 1]):
                w = ix[k]
                if w == v:
                    continue
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    pv[n_pairs] = v
                    pw[n_pairs] = w
                    n_pairs += 1
        # reverse discovery order visits every w after all of its successors
        for k in range(n_pairs - 1, -1, -1):
            v = pv[k]
            w = pw[k]
            delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
        for v in range(n):
            if v != s:
                cb[v] += delta[v]
    return np.asarray(cb)


def spmm(indptr, indices, data, x):
    cdef const long long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long long[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] dv = np.ascontiguousarray(data, dtype=np.float64)
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n_rows = ip.shape[0] - 1
    cdef Py_ssize_t n_cols = xv.shape[1]
    out_arr = np.zeros((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, c, j
    cdef double a
    for i in range(n_rows):
        for k in range(ip[i], ip[i + 1]):
            j = ix[k]
            a = dv[k]
            for c in range(n_cols):
                out[i, c] += a * xv[j, c]
    return out_arr
