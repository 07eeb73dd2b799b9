"""Orthonormal Haar DWT and the 2-level wavelet packet transform.

Conventions
-----------
* 1D pairing is non-shifted: ``a[n] = (x[2n] + x[2n+1])/sqrt(2)`` and
  ``d[n] = (x[2n] - x[2n+1])/sqrt(2)``.
* 2D band names give the filter along axis -2 (rows index) first, then along
  axis -1. ``LH`` is low-pass across rows and high-pass across columns.
* The packet transform splits all four first-level bands again, giving 16
  bands of extent ``[H/4, W/4]`` indexed ``b = 4*p + q`` with ``p`` the
  first-level band and ``q`` the second-level band, each in LL, LH, HL, HH
  order.

This module does its own indexing and never routes through ``conv2d``
(which is a cross-correlation with a different alignment).
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

BAND_NAMES = ("LL", "LH", "HL", "HH")
N_BANDS = 16


@dataclass(frozen=True)
class WaveletFilterPair:
    """Two-tap analysis filters: ``low`` and ``high``."""

    low: tuple
    high: tuple

    def __post_init__(self):
        if len(self.low) != 2 or len(self.high) != 2:
            raise DimensionError("only two-tap (Haar-type) filter pairs are supported")


_S = 1.0 / np.sqrt(2.0)
HAAR = WaveletFilterPair(low=(_S, _S), high=(_S, -_S))


def band_label(b):
    """Human-readable label of packet band ``b``, e.g. ``'LH.HL'``."""
    p, q = divmod(b, 4)
    return f"{BAND_NAMES[p]}.{BAND_NAMES[q]}"


def _split(x, axis, filters):
    n = x.shape[axis]
    if n % 2:
        raise DimensionError(f"extent {n} along axis {axis} is odd; the Haar transform needs even extents")
    even = np.take(x, np.arange(0, n, 2), axis=axis)
    odd = np.take(x, np.arange(1, n, 2), axis=axis)
    (l0, l1), (h0, h1) = filters.low, filters.high
    return l0 * even + l1 * odd, h0 * even + h1 * odd


def _merge(a, d, axis, filters):
    if a.shape != d.shape:
        raise DimensionError(f"approx/detail shape mismatch: {a.shape} vs {d.shape}")
    (l0, l1), (h0, h1) = filters.low, filters.high
    even = l0 * a + h0 * d
    odd = l1 * a + h1 * d
    shape = list(a.shape)
    shape[axis] *= 2
    out = np.empty(shape, dtype=np.result_type(a, d, np.float64))
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(0, None, 2)
    out[tuple(idx)] = even
    idx[axis] = slice(1, None, 2)
    out[tuple(idx)] = odd
    return out


def dwt1d(signal, filters=HAAR):
    """Single-level 1D transform; returns ``(approx, detail)``."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {x.shape}")
    return _split(x, 0, filters)


def idwt1d(approx, detail, filters=HAAR):
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    if a.ndim != 1 or d.ndim != 1:
        raise DimensionError(f"expected vectors, got shapes {a.shape} and {d.shape}")
    return _merge(a, d, 0, filters)


def dwt2d(image, filters=HAAR):
    """One 2D level over the last two axes; returns ``(LL, LH, HL, HH)``."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim < 2:
        raise DimensionError(f"expected at least 2 dimensions, got shape {x.shape}")
    lo, hi = _split(x, -2, filters)
    ll, lh = _split(lo, -1, filters)
    hl, hh = _split(hi, -1, filters)
    return ll, lh, hl, hh


def idwt2d(ll, lh, hl, hh, filters=HAAR):
    lo = _merge(np.asarray(ll, np.float64), np.asarray(lh, np.float64), -1, filters)
    hi = _merge(np.asarray(hl, np.float64), np.asarray(hh, np.float64), -1, filters)
    return _merge(lo, hi, -2, filters)


def _check_divisible(shape):
    h, w = shape[-2], shape[-1]
    for name, ext in (("height", h), ("width", w)):
        if ext % 4:
            raise DimensionError(f"image {name} {ext} is not divisible by 4 (shape {tuple(shape)})")


def wpt2(images, filters=HAAR):
    """2-level packet transform of ``[..., H, W]`` to ``[..., 16, H/4, W/4]``."""
    x = np.asarray(images, dtype=np.float64)
    if x.ndim < 2:
        raise DimensionError(f"expected at least 2 dimensions, got shape {x.shape}")
    _check_divisible(x.shape)
    bands = []
    for first in dwt2d(x, filters):
        bands.extend(dwt2d(first, filters))
    return np.stack(bands, axis=-3)


def iwpt2(coeffs, filters=HAAR):
    """Inverse of :func:`wpt2`: ``[..., 16, h, w]`` to ``[..., 4h, 4w]``."""
    c = np.asarray(coeffs, dtype=np.float64)
    if c.ndim < 3 or c.shape[-3] != N_BANDS:
        raise DimensionError(f"expected [..., 16, h, w] sub-bands, got shape {c.shape}")
    firsts = [idwt2d(*(c[..., 4 * p + q, :, :] for q in range(4)), filters=filters) for p in range(4)]
    return idwt2d(*firsts, filters=filters)


def iwpt2_backward(grad_image, filters=HAAR):
    """Map an image-space gradient to per-band gradients.

    The inverse transform is orthonormal, so its adjoint is the forward
    transform.
    """
    return wpt2(grad_image, filters)


def bands_to_channels(coeffs):
    """``[n, C, 16, h, w]`` to ``[n, 16*C, h, w]`` with channel ``16*color + band``."""
    c = np.asarray(coeffs)
    if c.ndim != 5 or c.shape[2] != N_BANDS:
        raise DimensionError(f"expected [n, C, 16, h, w], got {c.shape}")
    n, ch, _, h, w = c.shape
    return c.reshape(n, ch * N_BANDS, h, w)


def channels_to_bands(x):
    """Inverse of :func:`bands_to_channels`."""
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] % N_BANDS:
        raise DimensionError(f"channel count must be a multiple of 16, got shape {x.shape}")
    n, c, h, w = x.shape
    return x.reshape(n, c // N_BANDS, N_BANDS, h, w)


@dataclass
class SubbandSet:
    """The 16 packet bands of every colour channel of one image."""

    bands: np.ndarray  # [C, 16, H/4, W/4]
    source_extent: tuple

    def __post_init__(self):
        self.bands = np.asarray(self.bands, dtype=np.float64)
        if self.bands.ndim != 4 or self.bands.shape[1] != N_BANDS:
            raise DimensionError(f"SubbandSet needs [C, 16, h, w] bands, got {self.bands.shape}")
        h, w = self.source_extent
        if self.bands.shape[2:] != (h // 4, w // 4) or h % 4 or w % 4:
            raise DimensionError(
                f"band extent {self.bands.shape[2:]} inconsistent with source extent {self.source_extent}"
            )

    @classmethod
    def from_image(cls, image):
        """Decompose a ``[C, H, W]`` image."""
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 3:
            raise DimensionError(f"expected [C, H, W], got {image.shape}")
        return cls(wpt2(image), tuple(image.shape[1:]))

    @property
    def channels(self):
        return self.bands.shape[0]

    def band(self, channel, b):
        return self.bands[channel, b]

    def energy(self):
        return float(np.sum(self.bands**2))

    def reconstruct(self):
        return iwpt2(self.bands)
