"""Generator and discriminator built from :mod:`wavesr.tensor` ops.

Each layer caches what its backward pass needs during ``forward``; call
``backward`` once per ``forward``. Parameter gradients accumulate into
``Tensor.grad`` unless ``param_grads=False``, which is how the generator
step pulls input gradients through the discriminator without touching its
parameters.
"""
from collections import OrderedDict

import numpy as np

from . import tensor as T
from . import wavelet
from .errors import DimensionError
from .tensor import Tensor

N_COLORS = 3
HEAD_CHANNELS = N_COLORS * wavelet.N_BANDS  # 48
PRELU_INIT = 0.25
LEAKY_SLOPE = 0.2
# Head starts near-silent, with the LL.LL band of each colour at the packet
# coefficient of a mid-grey image (4 * 0.5), so early steps fit detail
# instead of spending the whole budget building up the DC gain.
HEAD_INIT_GAIN = 0.01
HEAD_LL_BIAS_INIT = 4 * 0.5


# -- functional activations ------------------------------------------------------------------


def prelu(x, slope):
    """Per-channel parametric ReLU on ``[n, c, h, w]``."""
    slope = np.asarray(slope, dtype=np.float64)
    if slope.shape != (x.shape[1],):
        raise DimensionError(f"slope length {slope.shape} does not match {x.shape[1]} channels")
    return np.where(x >= 0, x, slope[None, :, None, None] * x)


def prelu_backward(x, slope, grad):
    neg = x < 0
    gx = np.where(neg, np.asarray(slope)[None, :, None, None] * grad, grad)
    gslope = np.sum(np.where(neg, x * grad, 0.0), axis=(0, 2, 3))
    return gx, gslope


def leaky_relu(x, slope=LEAKY_SLOPE):
    return np.where(x >= 0, x, slope * x)


def leaky_relu_backward(x, grad, slope=LEAKY_SLOPE):
    return np.where(x >= 0, grad, slope * grad)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad):
    return np.where(x > 0, grad, 0.0)


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# -- layers ----------------------------------------------------------------------------------


class Module:
    """Minimal parameter container with deterministic naming order."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for i, m in enumerate(value):
                    yield from m.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self):
        return OrderedDict(self.named_parameters())

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.zero_grad()

    def state_dict(self):
        return OrderedDict((k, p.data.copy()) for k, p in self.named_parameters())

    def load_state_dict(self, state, strict=True):
        params = self.parameters()
        if strict:
            missing = set(params) - set(state)
            extra = set(state) - set(params)
            if missing or extra:
                raise DimensionError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            if name not in state:
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise DimensionError(f"{name}: stored shape {value.shape} != model shape {p.shape}")
            p.data = np.ascontiguousarray(value)
            p.grad = None

    def num_parameters(self):
        return sum(p.size for _, p in self.named_parameters())


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, stride=1, pad=1, k=3):
        self.weight = Tensor(np.zeros((out_ch, in_ch, k, k)))
        self.bias = Tensor(np.zeros(out_ch))
        self._stride = stride
        self._pad = pad
        self._x = None

    def init(self, rng):
        fan_in = int(np.prod(self.weight.shape[1:]))
        self.weight.data = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=self.weight.shape)
        self.bias.data = np.zeros(self.bias.shape)

    def forward(self, x):
        self._x = x
        return T.conv2d(x, self.weight.data, self.bias.data, self._stride, self._pad)

    def backward(self, grad, param_grads=True):
        gx, gw, gb = T.conv2d_backward(self._x, self.weight.data, grad, self._stride, self._pad)
        if param_grads:
            self.weight.accumulate(gw)
            self.bias.accumulate(gb)
        return gx


class PReLU(Module):
    def __init__(self, channels):
        self.slope = Tensor(np.full(channels, PRELU_INIT))
        self._x = None

    def init(self, rng):
        self.slope.data = np.full(self.slope.shape, PRELU_INIT)

    def forward(self, x):
        self._x = x
        return prelu(x, self.slope.data)

    def backward(self, grad, param_grads=True):
        gx, gs = prelu_backward(self._x, self.slope.data, grad)
        if param_grads:
            self.slope.accumulate(gs)
        return gx


class ResidualBlock(Module):
    """``x + conv2(prelu(conv1(x)))`` with no normalization layers."""

    def __init__(self, channels):
        self.conv1 = Conv2d(channels, channels)
        self.prelu = PReLU(channels)
        self.conv2 = Conv2d(channels, channels)

    def init(self, rng):
        self.conv1.init(rng)
        self.prelu.init(rng)
        self.conv2.init(rng)

    def forward(self, x):
        return x + self.conv2.forward(self.prelu.forward(self.conv1.forward(x)))

    def backward(self, grad, param_grads=True):
        g = self.conv2.backward(grad, param_grads)
        g = self.prelu.backward(g, param_grads)
        g = self.conv1.backward(g, param_grads)
        return grad + g


def wavelet_input_features(lr):
    """LR image plus its 1-level DWT bands, nearest-upsampled back to LR extent (15 channels)."""
    h, w = lr.shape[2:]
    if h % 2 or w % 2:
        raise DimensionError(f"input=wavelet needs even LR extents, got {h}x{w}")
    bands = np.concatenate(wavelet.dwt2d(lr), axis=1)  # n, 12, h/2, w/2
    up = bands.repeat(2, axis=2).repeat(2, axis=3)
    return np.concatenate([lr, up], axis=1)


class Generator(Module):
    """Embedding conv + PReLU, residual trunk with global skip, linear 48-channel head.

    The head predicts the 16 packet sub-bands of each colour channel of the
    4x image at LR resolution; channel ``16*color + band``.
    """

    def __init__(self, features=64, blocks=8, input_mode="pixels"):
        if input_mode not in ("pixels", "wavelet"):
            raise DimensionError(f"unknown input mode {input_mode!r}")
        self.input_mode = input_mode
        in_ch = N_COLORS if input_mode == "pixels" else N_COLORS * 5
        self.embed = Conv2d(in_ch, features)
        self.embed_act = PReLU(features)
        self.blocks = [ResidualBlock(features) for _ in range(blocks)]
        self.trunk = Conv2d(features, features)
        self.head = Conv2d(features, HEAD_CHANNELS)

    def init(self, rng):
        self.embed.init(rng)
        self.embed_act.init(rng)
        for b in self.blocks:
            b.init(rng)
        self.trunk.init(rng)
        self.head.init(rng)
        self.head.weight.data *= HEAD_INIT_GAIN
        self.head.bias.data[:: wavelet.N_BANDS] = HEAD_LL_BIAS_INIT

    def forward(self, lr):
        lr = np.asarray(lr, dtype=np.float64)
        if lr.ndim != 4 or lr.shape[1] != N_COLORS:
            raise DimensionError(f"generator expects [n, 3, h, w] input, got {lr.shape}")
        x = wavelet_input_features(lr) if self.input_mode == "wavelet" else lr
        e = self.embed_act.forward(self.embed.forward(x))
        t = e
        for b in self.blocks:
            t = b.forward(t)
        t = self.trunk.forward(t) + e
        return self.head.forward(t)

    def backward(self, grad, param_grads=True):
        """Backpropagate a gradient on the 48 coefficient channels to all parameters."""
        g = self.head.backward(grad, param_grads)
        g_e = g  # global skip
        g = self.trunk.backward(g, param_grads)
        for b in reversed(self.blocks):
            g = b.backward(g, param_grads)
        g = g + g_e
        g = self.embed_act.backward(g, param_grads)
        return self.embed.backward(g, param_grads)


class Discriminator(Module):
    """Conv stack with LeakyReLU(0.2), global average pool, dense, sigmoid.

    Layout: ``3->c`` (s1), then for widths ``c, 2c, 4c`` a stride-1 conv into
    the width followed by a stride-2 conv at that width.
    """

    MIN_EXTENT = 16

    def __init__(self, channels=32):
        c = channels
        spec = [(3, c, 1), (c, c, 2), (c, 2 * c, 1), (2 * c, 2 * c, 2), (2 * c, 4 * c, 1), (4 * c, 4 * c, 2)]
        self.convs = [Conv2d(i, o, stride=s, pad=1) for i, o, s in spec]
        self.dense_w = Tensor(np.zeros((1, 4 * c)))
        self.dense_b = Tensor(np.zeros(1))
        self._acts = None
        self._pooled = None
        self._prob = None

    def init(self, rng):
        for conv in self.convs:
            conv.init(rng)
        fan_in = self.dense_w.shape[1]
        self.dense_w.data = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=self.dense_w.shape)
        self.dense_b.data = np.zeros(1)

    def forward(self, image):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 4 or image.shape[1] != N_COLORS:
            raise DimensionError(f"discriminator expects [n, 3, H, W], got {image.shape}")
        if min(image.shape[2:]) < self.MIN_EXTENT:
            raise DimensionError(f"discriminator input {image.shape[2:]} is smaller than {self.MIN_EXTENT}x{self.MIN_EXTENT}")
        self._acts = []
        x = image
        for conv in self.convs:
            z = conv.forward(x)
            self._acts.append(z)
            x = leaky_relu(z)
        self._spatial = x.shape[2] * x.shape[3]
        pooled = x.mean(axis=(2, 3))  # n, 4c
        self._pooled = pooled
        logit = pooled @ self.dense_w.data.T + self.dense_b.data  # n, 1
        self._prob = sigmoid(logit[:, 0])
        return T.check_finite(self._prob.copy(), "discriminator output")

    def backward(self, grad_prob, param_grads=True):
        """Gradient of the probabilities back to the input image."""
        p = self._prob
        g_logit = (np.asarray(grad_prob, dtype=np.float64) * p * (1.0 - p))[:, None]  # n, 1
        if param_grads:
            self.dense_w.accumulate(g_logit.T @ self._pooled)
            self.dense_b.accumulate(g_logit.sum(axis=0))
        g_pooled = g_logit @ self.dense_w.data  # n, 4c
        z = self._acts[-1]
        g = np.broadcast_to(g_pooled[:, :, None, None] / self._spatial, z.shape)
        for conv, z in zip(reversed(self.convs), reversed(self._acts)):
            g = leaky_relu_backward(z, g)
            g = conv.backward(np.ascontiguousarray(g), param_grads)
        return g


def init_generator(seed, features=64, blocks=8, input_mode="pixels"):
    """He-initialised generator, reproducible from ``seed``."""
    gen = Generator(features, blocks, input_mode)
    gen.init(np.random.default_rng([seed, 0]))
    return gen


def init_discriminator(seed, channels=32):
    disc = Discriminator(channels)
    disc.init(np.random.default_rng([seed, 1]))
    return disc


def sr_reconstruct(gen, lr):
    """Run the generator and invert the predicted sub-bands.

    Returns ``(sr, coeffs)`` where ``sr`` is ``[n, 3, 4h, 4w]`` (unclamped)
    and ``coeffs`` is the raw ``[n, 48, h, w]`` head output.
    """
    coeffs = gen.forward(lr)
    sr = wavelet.iwpt2(wavelet.channels_to_bands(coeffs))
    return sr, coeffs


def sr_backward(grad_sr):
    """Map an SR-image gradient onto the 48 coefficient channels."""
    return wavelet.bands_to_channels(wavelet.iwpt2_backward(grad_sr))


def to_display(image):
    """Clamp to [0, 1]; only ever applied at export time."""
    return np.clip(image, 0.0, 1.0)
