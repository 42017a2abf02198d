# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: 1-d convolution, LSTM cell, embedding scatter-add.

Semantics match ``_pykernels`` exactly (see that module for the contract);
the wins here are fused im2col/gate loops and no Python-level temporaries.
Matrix products go through BLAS via scipy's cython bindings, handling the
row-major layout with the usual transpose identity C^T = B^T A^T.
"""

import numpy as np

from libc.math cimport exp, tanh
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm, sgemm

NAME = "c"

ctypedef fused real:
    float
    double


cdef void _gemm(bint ta, bint tb, int m, int n, int k,
                real* a, real* b, real beta, real* c) noexcept nogil:
    """C (m,n) = op(A) @ op(B) + beta*C, all row-major.

    op(A) is A (m,k) or, when ta, A^T with A stored (k,m); likewise for B.
    """
    cdef char cn = b'N', ct = b'T'
    cdef real alpha = 1.0
    cdef int lda = m if ta else k
    cdef int ldb = k if tb else n
    # row-major product via column-major BLAS: C^T = op(B)^T op(A)^T
    if real is float:
        sgemm(&ct if tb else &cn, &ct if ta else &cn, &n, &m, &k,
              <float*>&alpha, <float*>b, &ldb, <float*>a, &lda,
              <float*>&beta, <float*>c, &n)
    else:
        dgemm(&ct if tb else &cn, &ct if ta else &cn, &n, &m, &k,
              <double*>&alpha, <double*>b, &ldb, <double*>a, &lda,
              <double*>&beta, <double*>c, &n)


cdef inline real _sigmoid(real v) noexcept nogil:
    return <real>(1.0 / (1.0 + exp(-<double>v)))


def _dtype(arr):
    return arr.dtype


def conv1d_forward(real[:, :, ::1] x, real[:, :, ::1] w, real[::1] b, bint same):
    cdef Py_ssize_t batch = x.shape[0], m = x.shape[1], d = x.shape[2]
    cdef Py_ssize_t win = w.shape[0], nf = w.shape[2]
    cdef Py_ssize_t left = (win - 1) // 2 if same else 0
    cdef Py_ssize_t mp = m + win - 1 if same else m
    cdef Py_ssize_t length = mp - win + 1
    dtype = np.float32 if real is float else np.float64

    out_arr = np.empty((batch, length, nf), dtype=dtype)
    cols_arr = np.zeros((batch * length, win * d), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef real[:, ::1] cols = cols_arr
    cdef Py_ssize_t bi, t, wi, src, row
    with nogil:
        for bi in range(batch):
            for t in range(length):
                row = bi * length + t
                for wi in range(win):
                    src = t + wi - left
                    if 0 <= src < m:
                        memcpy(&cols[row, wi * d], &x[bi, src, 0], d * sizeof(real))
        _gemm(False, False, <int>(batch * length), <int>nf, <int>(win * d),
              &cols[0, 0], &w[0, 0, 0], <real>0.0, &out[0, 0, 0])
        for row in range(batch * length):
            for wi in range(nf):
                out[row // length, row % length, wi] += b[wi]
    return out_arr


def conv1d_backward(real[:, :, ::1] x, real[:, :, ::1] w, bint same,
                    real[:, :, ::1] grad_out):
    cdef Py_ssize_t batch = x.shape[0], m = x.shape[1], d = x.shape[2]
    cdef Py_ssize_t win = w.shape[0], nf = w.shape[2]
    cdef Py_ssize_t left = (win - 1) // 2 if same else 0
    cdef Py_ssize_t length = grad_out.shape[1]
    dtype = np.float32 if real is float else np.float64

    cols_arr = np.zeros((batch * length, win * d), dtype=dtype)
    gcols_arr = np.empty((batch * length, win * d), dtype=dtype)
    gx_arr = np.zeros((batch, m, d), dtype=dtype)
    gw_arr = np.empty((win, d, nf), dtype=dtype)
    gb_arr = np.zeros(nf, dtype=dtype)
    cdef real[:, ::1] cols = cols_arr, gcols = gcols_arr
    cdef real[:, :, ::1] gx = gx_arr, gw = gw_arr
    cdef real[::1] gb = gb_arr
    cdef Py_ssize_t bi, t, wi, src, row, j
    with nogil:
        for bi in range(batch):
            for t in range(length):
                row = bi * length + t
                for wi in range(win):
                    src = t + wi - left
                    if 0 <= src < m:
                        memcpy(&cols[row, wi * d], &x[bi, src, 0], d * sizeof(real))
        # gw = cols^T @ gflat ; gcols = gflat @ w2^T
        _gemm(True, False, <int>(win * d), <int>nf, <int>(batch * length),
              &cols[0, 0], &grad_out[0, 0, 0], <real>0.0, &gw[0, 0, 0])
        _gemm(False, True, <int>(batch * length), <int>(win * d), <int>nf,
              &grad_out[0, 0, 0], &w[0, 0, 0], <real>0.0, &gcols[0, 0])
        for bi in range(batch):
            for t in range(length):
                row = bi * length + t
                for j in range(nf):
                    gb[j] += grad_out[bi, t, j]
                for wi in range(win):
                    src = t + wi - left
                    if 0 <= src < m:
                        for j in range(d):
                            gx[bi, src, j] += gcols[row, wi * d + j]
    return gx_arr, gw_arr, gb_arr


def lstm_cell_forward(real[:, ::1] x, real[:, ::1] h_prev, real[:, ::1] c_prev,
                      real[:, ::1] w, real[:, ::1] u, real[::1] b):
    cdef Py_ssize_t batch = x.shape[0], d = x.shape[1], hidden = h_prev.shape[1]
    cdef Py_ssize_t g4 = 4 * hidden
    dtype = np.float32 if real is float else np.float64

    gates_arr = np.empty((batch, g4), dtype=dtype)
    h_arr = np.empty((batch, hidden), dtype=dtype)
    c_arr = np.empty((batch, hidden), dtype=dtype)
    cdef real[:, ::1] gates = gates_arr, h_new = h_arr, c_new = c_arr
    cdef Py_ssize_t bi, j
    cdef real gi, gf, go, gg
    with nogil:
        _gemm(False, False, <int>batch, <int>g4, <int>d,
              &x[0, 0], &w[0, 0], <real>0.0, &gates[0, 0])
        _gemm(False, False, <int>batch, <int>g4, <int>hidden,
              &h_prev[0, 0], &u[0, 0], <real>1.0, &gates[0, 0])
        for bi in range(batch):
            for j in range(g4):
                gates[bi, j] += b[j]
            for j in range(3 * hidden):
                gates[bi, j] = _sigmoid(gates[bi, j])
            for j in range(3 * hidden, g4):
                gates[bi, j] = <real>tanh(<double>gates[bi, j])
            for j in range(hidden):
                gi = gates[bi, j]
                gf = gates[bi, hidden + j]
                go = gates[bi, 2 * hidden + j]
                gg = gates[bi, 3 * hidden + j]
                c_new[bi, j] = gf * c_prev[bi, j] + gi * gg
                h_new[bi, j] = go * <real>tanh(<double>c_new[bi, j])
    return h_arr, c_arr, gates_arr


def lstm_cell_backward(real[:, ::1] x, real[:, ::1] h_prev, real[:, ::1] c_prev,
                       real[:, ::1] w, real[:, ::1] u,
                       real[:, ::1] gates, real[:, ::1] c_new,
                       real[:, ::1] grad_h, real[:, ::1] grad_c):
    cdef Py_ssize_t batch = x.shape[0], d = x.shape[1], hidden = h_prev.shape[1]
    cdef Py_ssize_t g4 = 4 * hidden
    dtype = np.float32 if real is float else np.float64

    dpre_arr = np.empty((batch, g4), dtype=dtype)
    gx_arr = np.empty((batch, d), dtype=dtype)
    ghp_arr = np.empty((batch, hidden), dtype=dtype)
    gcp_arr = np.empty((batch, hidden), dtype=dtype)
    gw_arr = np.empty((d, g4), dtype=dtype)
    gu_arr = np.empty((hidden, g4), dtype=dtype)
    gb_arr = np.zeros(g4, dtype=dtype)
    cdef real[:, ::1] dpre = dpre_arr, gx = gx_arr, ghp = ghp_arr, gcp = gcp_arr
    cdef real[:, ::1] gw = gw_arr, gu = gu_arr
    cdef real[::1] gb = gb_arr
    cdef Py_ssize_t bi, j
    cdef real gi, gf, go, gg, tc, d_o, d_c
    with nogil:
        for bi in range(batch):
            for j in range(hidden):
                gi = gates[bi, j]
                gf = gates[bi, hidden + j]
                go = gates[bi, 2 * hidden + j]
                gg = gates[bi, 3 * hidden + j]
                tc = <real>tanh(<double>c_new[bi, j])
                d_o = grad_h[bi, j] * tc
                d_c = grad_c[bi, j] + grad_h[bi, j] * go * (<real>1.0 - tc * tc)
                dpre[bi, j] = d_c * gg * gi * (<real>1.0 - gi)
                dpre[bi, hidden + j] = d_c * c_prev[bi, j] * gf * (<real>1.0 - gf)
                dpre[bi, 2 * hidden + j] = d_o * go * (<real>1.0 - go)
                dpre[bi, 3 * hidden + j] = d_c * gi * (<real>1.0 - gg * gg)
                gcp[bi, j] = d_c * gf
        _gemm(False, True, <int>batch, <int>d, <int>g4,
              &dpre[0, 0], &w[0, 0], <real>0.0, &gx[0, 0])
        _gemm(False, True, <int>batch, <int>hidden, <int>g4,
              &dpre[0, 0], &u[0, 0], <real>0.0, &ghp[0, 0])
        _gemm(True, False, <int>d, <int>g4, <int>batch,
              &x[0, 0], &dpre[0, 0], <real>0.0, &gw[0, 0])
        _gemm(True, False, <int>hidden, <int>g4, <int>batch,
              &h_prev[0, 0], &dpre[0, 0], <real>0.0, &gu[0, 0])
        for bi in range(batch):
            for j in range(g4):
                gb[j] += dpre[bi, j]
    return gx_arr, ghp_arr, gcp_arr, gw_arr, gu_arr, gb_arr


def scatter_add_rows(real[:, ::1] table, long[::1] indices, real[:, ::1] rows):
    """table[indices[n]] += rows[n]; duplicate indices accumulate."""
    cdef Py_ssize_t n = indices.shape[0], dim = rows.shape[1]
    cdef Py_ssize_t i, j, r
    with nogil:
        for i in range(n):
            r = indices[i]
            for j in range(dim):
                table[r, j] += rows[i, j]
