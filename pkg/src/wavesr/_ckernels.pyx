# cython: language_level=3
"""Compiled convolution kernels: im2col/col2im loops in C plus BLAS dgemm.

Same contract as ``_pykernels``: inputs are pre-padded, float64 and
C-contiguous. The work is done one batch item at a time, in a fixed order,
so results are deterministic.
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _im2col(const double[:, :, ::1] xp, double* col, Py_ssize_t kh, Py_ssize_t kw,
                  Py_ssize_t stride, Py_ssize_t oh, Py_ssize_t ow) noexcept nogil:
    # col is row-major [c*kh*kw, oh*ow]
    cdef Py_ssize_t c = xp.shape[0]
    cdef Py_ssize_t ic, i, j, y, x, row, base
    row = 0
    for ic in range(c):
        for i in range(kh):
            for j in range(kw):
                base = row * oh * ow
                for y in range(oh):
                    for x in range(ow):
                        col[base + y * ow + x] = xp[ic, y * stride + i, x * stride + j]
                row += 1


cdef void _col2im(const double* col, double[:, :, ::1] gxp, Py_ssize_t kh, Py_ssize_t kw,
                  Py_ssize_t stride, Py_ssize_t oh, Py_ssize_t ow) noexcept nogil:
    cdef Py_ssize_t c = gxp.shape[0]
    cdef Py_ssize_t ic, i, j, y, x, row, base
    row = 0
    for ic in range(c):
        for i in range(kh):
            for j in range(kw):
                base = row * oh * ow
                for y in range(oh):
                    for x in range(ow):
                        gxp[ic, y * stride + i, x * stride + j] += col[base + y * ow + x]
                row += 1


def conv2d_forward(const double[:, :, :, ::1] xp, const double[:, :, :, ::1] w, Py_ssize_t stride,
                   Py_ssize_t oh, Py_ssize_t ow):
    cdef int n = <int>xp.shape[0], c = <int>xp.shape[1]
    cdef int o = <int>w.shape[0], kh = <int>w.shape[2], kw = <int>w.shape[3]
    cdef int K = c * kh * kw, L = <int>(oh * ow)
    out_arr = np.zeros((n, o, oh, ow), dtype=np.float64)
    col_arr = np.empty((K, L), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, ::1] col = col_arr
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N'
    cdef int b
    for b in range(n):
        with nogil:
            _im2col(xp[b], &col[0, 0], kh, kw, stride, oh, ow)
            # out[b] (o x L) = W (o x K) @ col (K x L), row-major
            dgemm(&tn, &tn, &L, &o, &K, &one, &col[0, 0], &L, <double*>&w[0, 0, 0, 0], &K,
                  &zero, &out[b, 0, 0, 0], &L)
    return out_arr


def conv2d_grad_input(const double[:, :, :, ::1] grad_out, const double[:, :, :, ::1] w,
                      tuple padded_shape, Py_ssize_t stride):
    cdef int n = <int>grad_out.shape[0], o = <int>grad_out.shape[1]
    cdef Py_ssize_t oh = grad_out.shape[2], ow = grad_out.shape[3]
    cdef int c = <int>w.shape[1], kh = <int>w.shape[2], kw = <int>w.shape[3]
    cdef int K = c * kh * kw, L = <int>(oh * ow)
    gxp_arr = np.zeros(padded_shape, dtype=np.float64)
    col_arr = np.empty((K, L), dtype=np.float64)
    cdef double[:, :, :, ::1] gxp = gxp_arr
    cdef double[:, ::1] col = col_arr
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N', tt = b'T'
    cdef int b
    for b in range(n):
        with nogil:
            # col (K x L) = W^T (K x o) @ grad_out[b] (o x L)
            dgemm(&tn, &tt, &L, &K, &o, &one, <double*>&grad_out[b, 0, 0, 0], &L,
                  <double*>&w[0, 0, 0, 0], &K, &zero, &col[0, 0], &L)
            _col2im(&col[0, 0], gxp[b], kh, kw, stride, oh, ow)
    return gxp_arr


def conv2d_grad_kernel(const double[:, :, :, ::1] xp, const double[:, :, :, ::1] grad_out,
                       Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    cdef int n = <int>grad_out.shape[0], o = <int>grad_out.shape[1]
    cdef Py_ssize_t oh = grad_out.shape[2], ow = grad_out.shape[3]
    cdef int c = <int>xp.shape[1]
    cdef int K = <int>(c * kh * kw), L = <int>(oh * ow)
    gw_arr = np.zeros((o, c, kh, kw), dtype=np.float64)
    col_arr = np.empty((K, L), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[:, ::1] col = col_arr
    cdef double one = 1.0
    cdef char tn = b'N', tt = b'T'
    cdef int b
    for b in range(n):
        with nogil:
            _im2col(xp[b], &col[0, 0], kh, kw, stride, oh, ow)
            # gw (o x K) += grad_out[b] (o x L) @ col^T (L x K)
            dgemm(&tt, &tn, &K, &o, &L, &one, &col[0, 0], &L,
                  <double*>&grad_out[b, 0, 0, 0], &L, &one, &gw[0, 0, 0, 0], &K)
    return gw_arr
