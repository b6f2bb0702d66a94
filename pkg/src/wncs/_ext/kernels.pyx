# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: batched register advance and sparse expectations."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def advance_rows(const cnp.int64_t[:, :] rows, const cnp.uint8_t[:] beta,
                 const cnp.uint8_t[:] gamma, Py_ssize_t v, cnp.int64_t cap):
    cdef Py_ssize_t S = rows.shape[0], W = rows.shape[1]
    cdef Py_ssize_t s, j, e0 = v + 2
    cdef cnp.int64_t val
    out_arr = np.empty((S, W), dtype=np.int64)
    cdef cnp.int64_t[:, :] out = out_arr
    for s in range(S):
        out[s, 0] = 1 if beta[s] else rows[s, 0] + 1
        if gamma[s]:
            for j in range(1, v + 2):
                out[s, j] = rows[s, j - 1]
            out[s, e0] = 1
            for j in range(e0 + 1, W):
                out[s, j] = rows[s, j - 1]
        else:
            for j in range(1, v + 2):
                out[s, j] = rows[s, j]
            out[s, e0] = rows[s, e0] + 1
            for j in range(e0 + 1, W):
                out[s, j] = rows[s, j]
        for j in range(W):
            val = out[s, j]
            if val > cap:
                out[s, j] = cap
    return out_arr


def expect_rows(const cnp.int64_t[:] indptr, const cnp.int64_t[:] indices,
                const double[:] probs, const double[:] values):
    """``out[r] = sum_k probs[k] * values[indices[k]]`` over CSR row ``r``."""
    cdef Py_ssize_t R = indptr.shape[0] - 1, r, k
    cdef double acc
    out_arr = np.empty(R, dtype=np.float64)
    cdef double[:] out = out_arr
    for r in range(R):
        acc = 0.0
        for k in range(indptr[r], indptr[r + 1]):
            acc += probs[k] * values[indices[k]]
        out[r] = acc
    return out_arr
