# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution and pooling kernels.

Loop order matches ``_kernels_py`` so results agree with the numpy fallback.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def _im2col(real[:, :, :, ::1] x, real[:, :, ::1] out, int kh, int kw, int stride, int padding):
    cdef Py_ssize_t n, c, i, j, r, q, row, col, k
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = (H + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * padding - kw) // stride + 1
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        k = (c * kh + i) * kw + j
                        for r in range(OH):
                            row = r * stride + i - padding
                            for q in range(OW):
                                col = q * stride + j - padding
                                if 0 <= row < H and 0 <= col < W:
                                    out[n, k, r * OW + q] = x[n, c, row, col]
                                else:
                                    out[n, k, r * OW + q] = 0


def _col2im(real[:, :, ::1] cols, real[:, :, :, ::1] out, int kh, int kw, int stride, int padding):
    # out is the padded image buffer, zero-initialised by the caller
    cdef Py_ssize_t n, c, i, j, r, q, k
    cdef Py_ssize_t N = out.shape[0], C = out.shape[1]
    cdef Py_ssize_t Hp = out.shape[2], Wp = out.shape[3]
    cdef Py_ssize_t OH = (Hp - kh) // stride + 1
    cdef Py_ssize_t OW = (Wp - kw) // stride + 1
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        k = (c * kh + i) * kw + j
                        for r in range(OH):
                            for q in range(OW):
                                out[n, c, r * stride + i, q * stride + j] += cols[n, k, r * OW + q]


def _maxpool_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] out,
                     cnp.int64_t[:, :, :, ::1] argmax, int size, int stride):
    cdef Py_ssize_t n, c, r, q, i, j, best_idx
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = out.shape[2], OW = out.shape[3]
    cdef real best, v
    with nogil:
        for n in range(N):
            for c in range(C):
                for r in range(OH):
                    for q in range(OW):
                        best = x[n, c, r * stride, q * stride]
                        best_idx = r * stride * W + q * stride
                        for i in range(size):
                            for j in range(size):
                                v = x[n, c, r * stride + i, q * stride + j]
                                if v > best:
                                    best = v
                                    best_idx = (r * stride + i) * W + q * stride + j
                        out[n, c, r, q] = best
                        argmax[n, c, r, q] = (n * C + c) * H * W + best_idx


def _maxpool_backward(real[::1] grad, cnp.int64_t[::1] argmax, real[::1] out):
    cdef Py_ssize_t k, M = grad.shape[0]
    with nogil:
        for k in range(M):
            out[argmax[k]] += grad[k]


def im2col(x, kh, kw, stride, padding):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.empty((n, c * kh * kw, oh * ow), dtype=x.dtype)
    _im2col(x, out, kh, kw, stride, padding)
    return out


def col2im(cols, x_shape, kh, kw, stride, padding):
    n, c, h, w = x_shape
    cols = np.ascontiguousarray(cols).reshape(n, c * kh * kw, -1)
    out = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    _col2im(cols, out, kh, kw, stride, padding)
    if padding:
        out = np.ascontiguousarray(out[:, :, padding:padding + h, padding:padding + w])
    return out


def maxpool_forward(x, size, stride):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    oh = (h - size) // stride + 1
    ow = (w - size) // stride + 1
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    argmax = np.empty((n, c, oh, ow), dtype=np.int64)
    _maxpool_forward(x, out, argmax, size, stride)
    return out, argmax


def maxpool_backward(grad, argmax, x_shape):
    grad = np.ascontiguousarray(grad).ravel()
    out = np.zeros(int(np.prod(x_shape)), dtype=grad.dtype)
    _maxpool_backward(grad, np.ascontiguousarray(argmax, dtype=np.int64).ravel(), out)
    return out.reshape(x_shape)
