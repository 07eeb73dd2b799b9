"""Content, adversarial and wavelet-coefficient losses with their gradients.

Every loss is a mean rather than a sum so values are comparable across
batch sizes and crop sizes. Probabilities are clamped to
``[PROB_EPS, 1 - PROB_EPS]`` before any log; the clamp's derivative is
zero outside that interval.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import checkpoint
from . import tensor as T
from . import wavelet
from .errors import ConfigError, DimensionError
from .network import Conv2d, relu, relu_backward

PROB_EPS = 1e-7


@dataclass
class LossWeights:
    lambda_adv: float = 1e-3
    lambda_wavelet: float = 1.0
    alpha: np.ndarray = field(default_factory=lambda: np.ones(wavelet.N_BANDS))

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.shape != (wavelet.N_BANDS,):
            raise ConfigError(f"alpha must have exactly 16 entries, got {self.alpha.size}")
        if self.lambda_adv < 0 or self.lambda_wavelet < 0 or np.any(self.alpha < 0):
            raise ConfigError("loss weights must be non-negative")


class FeatureExtractor:
    """Frozen feature map used by the content loss.

    ``kind="random"``: three stride-2 3x3 convs (3->16->32->64) with ReLU,
    drawn once from ``seed``. ``kind="identity"``: features are the pixels.
    :meth:`from_file` loads conv weights from a ``WSR1`` file with entries
    ``conv{i}.weight`` / ``conv{i}.bias``.

    The extractor never exposes trainable parameters.
    """

    WIDTHS = (3, 16, 32, 64)

    def __init__(self, kind="random", seed=0, convs=None):
        if kind not in ("random", "identity", "file"):
            raise ConfigError(f"unknown feature extractor {kind!r}")
        self.kind = kind
        if convs is not None:
            self._convs = convs
        elif kind == "random":
            rng = np.random.default_rng([seed, 2])
            self._convs = []
            for i, o in zip(self.WIDTHS[:-1], self.WIDTHS[1:]):
                conv = Conv2d(i, o, stride=2, pad=1)
                conv.init(rng)
                self._convs.append(conv)
        else:
            self._convs = []
        self._pre = []

    @classmethod
    def from_file(cls, path):
        entries = checkpoint.load(path)
        convs = []
        i = 0
        while f"conv{i}.weight" in entries:
            w = entries[f"conv{i}.weight"].astype(np.float64)
            b = entries.get(f"conv{i}.bias")
            conv = Conv2d(w.shape[1], w.shape[0], stride=2, pad=1, k=w.shape[2])
            conv.weight.data = np.ascontiguousarray(w)
            conv.bias.data = np.zeros(w.shape[0]) if b is None else b.astype(np.float64)
            convs.append(conv)
            i += 1
        if not convs:
            raise ConfigError(f"{path}: no conv0.weight entry for a feature extractor")
        return cls("file", convs=convs)

    def to_entries(self):
        out = {}
        for i, conv in enumerate(self._convs):
            out[f"conv{i}.weight"] = conv.weight.data
            out[f"conv{i}.bias"] = conv.bias.data
        return out

    def forward(self, x):
        self._pre = []
        for conv in self._convs:
            z = conv.forward(x)
            self._pre.append(z)
            x = relu(z)
        return x

    def backward(self, grad):
        for conv, z in zip(reversed(self._convs), reversed(self._pre)):
            grad = conv.backward(relu_backward(z, grad), param_grads=False)
        return grad

    def trainable_parameters(self):
        return {}


def content_loss(sr, hr, extractor):
    """Mean squared difference of extractor features."""
    return content_loss_grad(sr, hr, extractor, need_grad=False)[0]


def content_loss_grad(sr, hr, extractor, need_grad=True):
    """``(value, d value / d sr)``."""
    if np.shape(sr) != np.shape(hr):
        raise DimensionError(f"sr shape {np.shape(sr)} != hr shape {np.shape(hr)}")
    f_hr = extractor.forward(hr)
    f_sr = extractor.forward(sr)
    value = T.mse(f_sr, f_hr)
    if not need_grad:
        return value, None
    return value, extractor.backward(T.mse_backward(f_sr, f_hr))


def _as_bands(c):
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 4:
        return wavelet.channels_to_bands(c)
    if c.ndim < 3 or c.shape[-3] != wavelet.N_BANDS:
        raise DimensionError(f"expected sub-bands [..., 16, h, w], got {c.shape}")
    return c


def wavelet_loss(coeff_sr, coeff_hr, alpha=None):
    return wavelet_loss_grad(coeff_sr, coeff_hr, alpha, need_grad=False)[0]


def wavelet_loss_grad(coeff_sr, coeff_hr, alpha=None, need_grad=True):
    """Sum over bands of ``alpha[b] * mean((hr_b - sr_b)**2)``.

    Accepts ``[..., 16, h, w]`` band arrays or ``[n, 48, h, w]`` channel
    stacks; the gradient comes back in the shape of ``coeff_sr``.
    """
    shape = np.shape(coeff_sr)
    sr = _as_bands(coeff_sr)
    hr = _as_bands(coeff_hr)
    if sr.shape != hr.shape:
        raise DimensionError(f"sub-band shapes differ: {sr.shape} vs {hr.shape}")
    alpha = np.ones(wavelet.N_BANDS) if alpha is None else np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (wavelet.N_BANDS,):
        raise DimensionError(f"alpha must have 16 entries, got {alpha.shape}")
    diff = sr - hr
    axes = tuple(i for i in range(diff.ndim) if i != diff.ndim - 3)
    per_band = np.mean(diff * diff, axis=axes)
    value = float(np.dot(alpha, per_band))
    if not need_grad:
        return value, None
    per_band_count = diff.size / wavelet.N_BANDS
    scale = (2.0 * alpha / per_band_count)[:, None, None]
    return value, (scale * diff).reshape(shape)


def _clamp(p):
    p = np.asarray(p, dtype=np.float64)
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS), (p >= PROB_EPS) & (p <= 1.0 - PROB_EPS)


def adversarial_loss_g(d_fake):
    """Mean of ``-log D(G(x))`` over the batch."""
    return adversarial_loss_g_grad(d_fake)[0]


def adversarial_loss_g_grad(d_fake):
    p, inside = _clamp(d_fake)
    value = float(np.mean(-np.log(p)))
    grad = np.where(inside, -1.0 / (p * p.size), 0.0)
    return value, grad


def discriminator_loss(d_real, d_fake):
    """Binary cross-entropy: mean of ``-log D(real) - log(1 - D(fake))``."""
    return discriminator_loss_grad(d_real, d_fake)[0]


def discriminator_loss_grad(d_real, d_fake):
    r, r_in = _clamp(d_real)
    f, f_in = _clamp(d_fake)
    if r.shape != f.shape:
        raise DimensionError(f"real/fake batch mismatch: {r.shape} vs {f.shape}")
    n = r.size
    value = float(np.mean(-np.log(r) - np.log(1.0 - f)))
    g_real = np.where(r_in, -1.0 / (r * n), 0.0)
    g_fake = np.where(f_in, 1.0 / ((1.0 - f) * n), 0.0)
    return value, g_real, g_fake


class LossBreakdown(NamedTuple):
    content: float
    adversarial: float
    wavelet: float
    total: float


class GeneratorGrads(NamedTuple):
    sr: np.ndarray  # image-space gradient (content term)
    d_fake: np.ndarray  # gradient on discriminator probabilities (adversarial term)
    coeffs: np.ndarray  # coefficient-space gradient (wavelet term)


def generator_total_loss(sr, hr, d_fake, coeff_sr, coeff_hr, weights, extractor, need_grad=False):
    """``l_C + lambda_adv * l_A + lambda_wavelet * l_wavelet``.

    Returns a :class:`LossBreakdown` of unweighted components plus the
    weighted total; with ``need_grad`` also a :class:`GeneratorGrads`.
    """
    l_c, g_sr = content_loss_grad(sr, hr, extractor, need_grad)
    l_a, g_d = adversarial_loss_g_grad(d_fake)
    l_w, g_c = wavelet_loss_grad(coeff_sr, coeff_hr, weights.alpha, need_grad)
    total = l_c + weights.lambda_adv * l_a + weights.lambda_wavelet * l_w
    breakdown = LossBreakdown(l_c, l_a, l_w, total)
    if not need_grad:
        return breakdown
    grads = GeneratorGrads(g_sr, weights.lambda_adv * g_d, weights.lambda_wavelet * g_c)
    return breakdown, grads
