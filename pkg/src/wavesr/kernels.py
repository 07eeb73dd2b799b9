"""Backend selection for the convolution kernels.

The compiled module is used when it imports; ``WAVESR_BACKEND=python``
forces the numpy fallback. Both backends implement the same three
functions on pre-padded float64 arrays.
"""
import os

from . import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["compiled"] = _ckernels


def _select():
    requested = os.environ.get("WAVESR_BACKEND", "").strip().lower()
    if requested:
        if requested not in BACKENDS:
            raise ImportError(
                f"WAVESR_BACKEND={requested!r} is not available; have {sorted(BACKENDS)}"
            )
        return requested
    return "compiled" if "compiled" in BACKENDS else "python"


BACKEND = _select()
_impl = BACKENDS[BACKEND]


def use_backend(name):
    """Switch the active kernel backend at runtime (used by tests and benchmarks)."""
    global BACKEND, _impl
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {sorted(BACKENDS)}")
    BACKEND, _impl = name, BACKENDS[name]


def conv2d_forward(xp, w, stride, oh, ow):
    return _impl.conv2d_forward(xp, w, stride, oh, ow)


def conv2d_grad_input(grad_out, w, padded_shape, stride):
    return _impl.conv2d_grad_input(grad_out, w, tuple(padded_shape), stride)


def conv2d_grad_kernel(xp, grad_out, kh, kw, stride):
    return _impl.conv2d_grad_kernel(xp, grad_out, kh, kw, stride)
