"""Dense float64 arrays and the handful of differentiable ops the networks use.

Activations are plain ``numpy.ndarray`` objects laid out ``[n, c, h, w]``.
Learnable values live in :class:`Tensor`, which pairs an array with its
gradient buffer. Every op has a hand-written backward; there is no tape.
No op broadcasts: operands must already have matching shapes.
"""
import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, NonFiniteError


class Tensor:
    """A parameter array plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if grad is not None:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise DimensionError(f"grad shape {grad.shape} != data shape {self.data.shape}")
        self.grad = grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g):
        if g.shape != self.data.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def copy(self):
        return Tensor(self.data.copy(), None if self.grad is None else self.grad.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def check_finite(x, what="output"):
    """Raise :class:`NonFiniteError` if ``x`` holds any NaN or Inf."""
    if not np.all(np.isfinite(x)):
        bad = int(np.size(x) - np.count_nonzero(np.isfinite(x)))
        raise NonFiniteError(f"{what} contains {bad} non-finite value(s)")
    return x


def _as4(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"{name} must be rank 4 [n, c, h, w], got shape {x.shape}")
    return np.ascontiguousarray(x)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def conv_output_extent(size, k, stride, pad):
    """Output extent of a strided convolution (floor convention)."""
    if stride < 1:
        raise ConfigError(f"stride must be positive, got {stride}")
    if pad < 0:
        raise ConfigError(f"pad must be non-negative, got {pad}")
    span = size + 2 * pad - k
    if span < 0:
        raise ConfigError(f"kernel extent {k} exceeds padded input extent {size + 2 * pad}")
    return span // stride + 1


def _check_conv_shapes(x, kernel, bias=None):
    if kernel.ndim != 4:
        raise DimensionError(f"kernel must be rank 4 [out, in, kh, kw], got {kernel.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise DimensionError(
            f"input channels do not match kernel: input {x.shape} vs kernel {kernel.shape}"
        )
    if bias is not None and np.shape(bias) != (kernel.shape[0],):
        raise DimensionError(f"bias shape {np.shape(bias)} does not match kernel {kernel.shape}")


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d(x, kernel, bias=None, stride=1, pad=0):
    """2D cross-correlation (no kernel flip) with zero padding.

    Output shape is ``[n, out, (h + 2*pad - kh)//stride + 1, (w + 2*pad - kw)//stride + 1]``.
    """
    x = _as4(x, "input")
    kernel = _as4(kernel, "kernel")
    _check_conv_shapes(x, kernel, bias)
    kh, kw = kernel.shape[2:]
    oh = conv_output_extent(x.shape[2], kh, stride, pad)
    ow = conv_output_extent(x.shape[3], kw, stride, pad)
    out = kernels.conv2d_forward(_pad(x, pad), kernel, stride, oh, ow)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return check_finite(out, "conv2d output")


def conv2d_backward(x, kernel, grad_out, stride=1, pad=0):
    """Gradients of :func:`conv2d` with respect to input, kernel and bias."""
    x = _as4(x, "input")
    kernel = _as4(kernel, "kernel")
    grad_out = _as4(grad_out, "grad_out")
    _check_conv_shapes(x, kernel)
    kh, kw = kernel.shape[2:]
    oh = conv_output_extent(x.shape[2], kh, stride, pad)
    ow = conv_output_extent(x.shape[3], kw, stride, pad)
    expected = (x.shape[0], kernel.shape[0], oh, ow)
    if grad_out.shape != expected:
        raise DimensionError(f"grad_out shape {grad_out.shape} does not match forward output {expected}")
    xp = _pad(x, pad)
    gxp = kernels.conv2d_grad_input(grad_out, kernel, xp.shape, stride)
    h, w = x.shape[2:]
    gx = np.ascontiguousarray(gxp[:, :, pad : pad + h, pad : pad + w])
    gk = kernels.conv2d_grad_kernel(xp, grad_out, kh, kw, stride)
    gb = grad_out.sum(axis=(0, 2, 3))
    return check_finite(gx, "grad_input"), check_finite(gk, "grad_kernel"), check_finite(gb, "grad_bias")


def add(a, b):
    _same_shape(a, b)
    return check_finite(a + b)


def add_backward(grad):
    return grad, grad


def sub(a, b):
    _same_shape(a, b)
    return check_finite(a - b)


def sub_backward(grad):
    return grad, -grad


def mul(a, b):
    _same_shape(a, b)
    return check_finite(a * b)


def mul_backward(a, b, grad):
    return grad * b, grad * a


def scale(a, s):
    return check_finite(a * float(s))


def scale_backward(grad, s):
    return grad * float(s)


def mse(a, b):
    """Mean squared error over every element."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    d = a - b
    return float(check_finite(np.mean(d * d), "mse"))


def mse_backward(a, b):
    """Gradient of :func:`mse` with respect to ``a`` (negate it for ``b``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    return 2.0 * (a - b) / a.size
