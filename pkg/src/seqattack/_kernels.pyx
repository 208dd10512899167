# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM step and nearest-row kernels.

Same contracts as ``_kernels_py``; matrix products go through BLAS dgemm,
the elementwise gate math runs in plain C loops.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sigmoid(double a) nogil:
    cdef double e
    if a >= 0:
        return 1.0 / (1.0 + exp(-a))
    e = exp(a)
    return e / (1.0 + e)


cdef void _rowmajor_gemm_nt(const double[:, ::1] A, const double[:, ::1] W, double[:, ::1] C,
                            double beta) noexcept nogil:
    # C (m x n) = A (m x k) @ W.T (k x n) + beta * C, all row-major
    cdef char ta = b'T'
    cdef char tb = b'N'
    cdef int n = <int>W.shape[0]
    cdef int m = <int>A.shape[0]
    cdef int k = <int>A.shape[1]
    cdef double alpha = 1.0
    if m == 0 or n == 0:
        return
    if k == 0:
        return
    dgemm(&ta, &tb, &n, &m, &k, &alpha, <double*>&W[0, 0], &k, <double*>&A[0, 0], &k, &beta, &C[0, 0], &n)


cdef void _rowmajor_gemm_nn(const double[:, ::1] A, const double[:, ::1] W, double[:, ::1] C) noexcept nogil:
    # C (m x n) = A (m x k) @ W (k x n), all row-major
    cdef char ta = b'N'
    cdef char tb = b'N'
    cdef int n = <int>W.shape[1]
    cdef int m = <int>A.shape[0]
    cdef int k = <int>A.shape[1]
    cdef double alpha = 1.0
    cdef double beta = 0.0
    if m == 0 or n == 0 or k == 0:
        return
    dgemm(&ta, &tb, &n, &m, &k, &alpha, <double*>&W[0, 0], &n, <double*>&A[0, 0], &k, &beta, &C[0, 0], &n)


def lstm_forward(x, h_prev, c_prev, Wx, Wh, b):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] hv = np.ascontiguousarray(h_prev, dtype=np.float64)
    cdef const double[:, ::1] cv = np.ascontiguousarray(c_prev, dtype=np.float64)
    cdef const double[:, ::1] Wxv = np.ascontiguousarray(Wx, dtype=np.float64)
    cdef const double[:, ::1] Whv = np.ascontiguousarray(Wh, dtype=np.float64)
    barr = np.asarray(b, dtype=np.float64)
    cdef Py_ssize_t B = hv.shape[0]
    cdef Py_ssize_t H = hv.shape[1]
    cdef Py_ssize_t r, j
    cdef bint per_row = barr.ndim == 2
    cdef const double[:, ::1] b2 = np.ascontiguousarray(barr if per_row else barr[None, :])

    a_arr = np.empty((B, 4 * H))
    h_arr = np.empty((B, H))
    c_arr = np.empty((B, H))
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] hn = h_arr
    cdef double[:, ::1] cn = c_arr
    cdef double ig, fg, og, gg, cc
    cdef Py_ssize_t brow

    with nogil:
        _rowmajor_gemm_nt(xv, Wxv, a, 0.0)
        _rowmajor_gemm_nt(hv, Whv, a, 1.0)
        for r in range(B):
            brow = r if per_row else 0
            for j in range(H):
                ig = _sigmoid(a[r, j] + b2[brow, j])
                fg = _sigmoid(a[r, H + j] + b2[brow, H + j])
                og = _sigmoid(a[r, 2 * H + j] + b2[brow, 2 * H + j])
                gg = tanh(a[r, 3 * H + j] + b2[brow, 3 * H + j])
                a[r, j] = ig
                a[r, H + j] = fg
                a[r, 2 * H + j] = og
                a[r, 3 * H + j] = gg
                cc = fg * cv[r, j] + ig * gg
                cn[r, j] = cc
                hn[r, j] = og * tanh(cc)
    return h_arr, c_arr, a_arr


def lstm_backward(dh, dc, c_prev, c, gates, Wx, Wh):
    cdef const double[:, ::1] dhv = np.ascontiguousarray(dh, dtype=np.float64)
    cdef const double[:, ::1] dcv = np.ascontiguousarray(dc, dtype=np.float64)
    cdef const double[:, ::1] cpv = np.ascontiguousarray(c_prev, dtype=np.float64)
    cdef const double[:, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] gv = np.ascontiguousarray(gates, dtype=np.float64)
    cdef const double[:, ::1] Wxv = np.ascontiguousarray(Wx, dtype=np.float64)
    cdef const double[:, ::1] Whv = np.ascontiguousarray(Wh, dtype=np.float64)
    cdef Py_ssize_t B = cv.shape[0]
    cdef Py_ssize_t H = cv.shape[1]
    cdef Py_ssize_t r, j
    cdef double ig, fg, og, gg, tc, dct

    da_arr = np.empty((B, 4 * H))
    dcp_arr = np.empty((B, H))
    dx_arr = np.empty((B, Wxv.shape[1]))
    dhp_arr = np.empty((B, H))
    cdef double[:, ::1] da = da_arr
    cdef double[:, ::1] dcp = dcp_arr
    cdef double[:, ::1] dxv = dx_arr
    cdef double[:, ::1] dhpv = dhp_arr

    with nogil:
        for r in range(B):
            for j in range(H):
                ig = gv[r, j]
                fg = gv[r, H + j]
                og = gv[r, 2 * H + j]
                gg = gv[r, 3 * H + j]
                tc = tanh(cv[r, j])
                dct = dcv[r, j] + dhv[r, j] * og * (1.0 - tc * tc)
                da[r, j] = dct * gg * ig * (1.0 - ig)
                da[r, H + j] = dct * cpv[r, j] * fg * (1.0 - fg)
                da[r, 2 * H + j] = dhv[r, j] * tc * og * (1.0 - og)
                da[r, 3 * H + j] = dct * ig * (1.0 - gg * gg)
                dcp[r, j] = dct * fg
        _rowmajor_gemm_nn(da, Wxv, dxv)
        _rowmajor_gemm_nn(da, Whv, dhpv)
    return dx_arr, dhp_arr, dcp_arr, da_arr


def nearest(Q, W, allowed):
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef const double[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef const cnp.int64_t[::1] rows = np.flatnonzero(allowed).astype(np.int64)
    cdef Py_ssize_t n = Qv.shape[0]
    cdef Py_ssize_t R = rows.shape[0]
    cdef Py_ssize_t d = Qv.shape[1]
    cdef Py_ssize_t q, r, k
    cdef double best, s, diff
    cdef cnp.int64_t bi
    idx_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef double[::1] dist = dist_arr
    with nogil:
        for q in range(n):
            best = -1.0
            bi = -1
            for r in range(R):
                s = 0.0
                for k in range(d):
                    diff = Qv[q, k] - Wv[rows[r], k]
                    s = s + diff * diff
                if bi < 0 or s < best:
                    best = s
                    bi = rows[r]
            idx[q] = bi
            dist[q] = sqrt(best)
    return idx_arr, dist_arr
