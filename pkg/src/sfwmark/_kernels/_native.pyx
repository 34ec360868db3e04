# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled L1 scan kernels used by key-pool identification."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline double _l1(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        acc += fabs(a[i] - b[i])
    return acc


def l1_rows(const double[::1] query, const double[:, ::1] refs):
    cdef Py_ssize_t k, K = refs.shape[0], n = refs.shape[1]
    if query.shape[0] != n:
        raise ValueError(f"query length {query.shape[0]} != reference length {n}")
    out = np.empty(K, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(K):
            o[k] = _l1(&query[0], &refs[k, 0], n) if n else 0.0
    return out


def l1_argmin(const double[:, ::1] queries, const double[:, ::1] refs):
    cdef Py_ssize_t q, k, Q = queries.shape[0], K = refs.shape[0], n = refs.shape[1]
    cdef Py_ssize_t best_k
    cdef double best, d
    if queries.shape[1] != n:
        raise ValueError(f"query length {queries.shape[1]} != reference length {n}")
    if K == 0:
        raise ValueError("empty reference pool")
    idx = np.empty(Q, dtype=np.int64)
    dist = np.empty(Q, dtype=np.float64)
    cdef cnp.int64_t[::1] oi = idx
    cdef double[::1] od = dist
    with nogil:
        for q in range(Q):
            best_k = 0
            best = _l1(&queries[q, 0], &refs[0, 0], n) if n else 0.0
            for k in range(1, K):
                d = _l1(&queries[q, 0], &refs[k, 0], n) if n else 0.0
                if d < best:
                    best = d
                    best_k = k
            oi[q] = best_k
            od[q] = best
    return idx, dist
