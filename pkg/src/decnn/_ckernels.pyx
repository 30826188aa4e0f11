# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
from libc.string cimport memcpy, memset

ctypedef fused real:
    float
    double


def im2col(x, int k):
    xh = np.ascontiguousarray(np.transpose(x, (0, 2, 3, 1)))
    if xh.dtype == np.float32:
        return _im2col_nhwc[float](xh, k)
    return _im2col_nhwc[double](xh, k)


cdef _im2col_nhwc(const real[:, :, :, ::1] x, int k):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef int p = (k - 1) // 2
    cdef Py_ssize_t b, di, dj, y, xx, yy, xs, row, col
    cdef size_t run = c * sizeof(real)
    dtype = np.float32 if real is float else np.float64
    out = np.empty((n * h * w, k * k * c), dtype=dtype)
    cdef real[:, ::1] o = out
    for b in range(n):
        for y in range(h):
            for xx in range(w):
                row = (b * h + y) * w + xx
                for di in range(k):
                    yy = y + di - p
                    for dj in range(k):
                        xs = xx + dj - p
                        col = (di * k + dj) * c
                        if yy < 0 or yy >= h or xs < 0 or xs >= w:
                            memset(&o[row, col], 0, run)
                        else:
                            memcpy(&o[row, col], &x[b, yy, xs, 0], run)
    return out


def prelu_forward(const real[:, :, :, ::1] x, alpha):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ci, i, j
    cdef real a, v
    dtype = np.float32 if real is float else np.float64
    cdef real[::1] al = np.ascontiguousarray(alpha, dtype=dtype)
    out = np.empty((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] o = out
    for b in range(n):
        for ci in range(c):
            a = al[ci]
            for i in range(h):
                for j in range(w):
                    v = x[b, ci, i, j]
                    o[b, ci, i, j] = v if v > 0 else a * v
    return out


def prelu_backward(const real[:, :, :, ::1] x, alpha, const real[:, :, :, ::1] grad_out):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ci, i, j
    cdef real a, v, g
    cdef double acc
    dtype = np.float32 if real is float else np.float64
    cdef real[::1] al = np.ascontiguousarray(alpha, dtype=dtype)
    gin = np.empty((n, c, h, w), dtype=dtype)
    galpha = np.zeros(c, dtype=np.float64)
    cdef real[:, :, :, ::1] gi = gin
    cdef double[::1] ga = galpha
    for ci in range(c):
        a = al[ci]
        acc = 0.0
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    v = x[b, ci, i, j]
                    g = grad_out[b, ci, i, j]
                    if v < 0:
                        gi[b, ci, i, j] = a * g
                        acc += <double>(g * v)
                    else:
                        gi[b, ci, i, j] = g
        ga[ci] = acc
    return gin, galpha
