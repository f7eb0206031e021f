"""Pure numpy implementations of the convolution and pooling kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop
so both backends add contributions in the same order and agree bitwise.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride, padding):
    """Unfold ``x`` (N, C, H, W) into columns of shape (N, C*kh*kw, OH*OW)."""
    n, c, h, w = x.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win[:, :, :oh, :ow]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * kh * kw, oh * ow)


def col2im(cols, x_shape, kh, kw, stride, padding):
    """Adjoint of :func:`im2col`: scatter-add columns back into an image."""
    n, c, h, w = x_shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    out = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    if padding:
        out = out[:, :, padding:padding + h, padding:padding + w]
    return np.ascontiguousarray(out)


def maxpool_forward(x, size, stride):
    """Max over ``size`` x ``size`` windows.

    Returns the pooled array and, per output element, the flat index into
    ``x`` of the first maximal input.
    """
    n, c, h, w = x.shape
    oh = (h - size) // stride + 1
    ow = (w - size) // stride + 1
    win = sliding_window_view(x, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win[:, :, :oh, :ow].reshape(n, c, oh, ow, size * size)
    local = win.argmax(axis=-1)
    out = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(local, size)
    rows = np.arange(oh)[:, None] * stride + di
    cols = np.arange(ow)[None, :] * stride + dj
    base = (np.arange(n)[:, None, None, None] * c + np.arange(c)[None, :, None, None]) * (h * w)
    return np.ascontiguousarray(out), (base + rows * w + cols).astype(np.int64)


def maxpool_backward(grad, argmax, x_shape):
    out = np.zeros(int(np.prod(x_shape)), dtype=grad.dtype)
    np.add.at(out, argmax.ravel(), grad.ravel())
    return out.reshape(x_shape)
