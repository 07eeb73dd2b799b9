"""Numpy convolution kernels, the fallback when the compiled module is absent.

All three kernels take an already zero-padded input, so padding is handled
once by the caller. Windows are gathered with ``sliding_window_view`` and
contracted with ``tensordot`` (BLAS), which keeps the summation order fixed
for a given shape.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(xp, kh, kw, stride, oh, ow):
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]


def conv2d_forward(xp, w, stride, oh, ow):
    """Cross-correlate padded input ``xp`` [n,c,H,W] with ``w`` [o,c,kh,kw]."""
    kh, kw = w.shape[2], w.shape[3]
    win = _windows(xp, kh, kw, stride, oh, ow)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # n, oh, ow, o
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_grad_input(grad_out, w, padded_shape, stride):
    """Gradient with respect to the padded input."""
    n, o, oh, ow = grad_out.shape
    kh, kw = w.shape[2], w.shape[3]
    gxp = np.zeros(padded_shape, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            # n, oh, ow, c
            contrib = np.tensordot(grad_out, w[:, :, i, j], axes=([1], [0]))
            gxp[:, :, i : i + (oh - 1) * stride + 1 : stride, j : j + (ow - 1) * stride + 1 : stride] += (
                contrib.transpose(0, 3, 1, 2)
            )
    return gxp


def conv2d_grad_kernel(xp, grad_out, kh, kw, stride):
    """Gradient with respect to the kernel, shape [o,c,kh,kw]."""
    oh, ow = grad_out.shape[2], grad_out.shape[3]
    win = _windows(xp, kh, kw, stride, oh, ow)
    return np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))
