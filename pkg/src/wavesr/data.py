"""Image I/O, bicubic resampling and seeded crop sampling.

Batch ``k`` is a pure function of ``(seed, k)``, so batches can be
prefetched or regenerated after a resume without changing results.
"""
import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DimensionError, FormatError

SCALE = 4
IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass
class ImageBuffer:
    """8-bit RGB pixels, row-major ``[height, width, 3]``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DimensionError(f"ImageBuffer needs [height, width, 3] pixels, got {px.shape}")
        self.pixels = np.ascontiguousarray(px, dtype=np.uint8)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def to_array(self):
        """``[3, H, W]`` float64 in [0, 1]."""
        return self.pixels.transpose(2, 0, 1).astype(np.float64) / 255.0

    def to_tensor(self):
        """``[1, 3, H, W]`` float64 in [0, 1]."""
        return self.to_array()[None]

    @classmethod
    def from_array(cls, arr):
        """Accepts ``[3, H, W]`` or ``[1, 3, H, W]``; clamps then rounds to 8 bits."""
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 4:
            if a.shape[0] != 1:
                raise DimensionError(f"expected a single image, got batch of {a.shape[0]}")
            a = a[0]
        if a.ndim != 3 or a.shape[0] != 3:
            raise DimensionError(f"expected [3, H, W], got {a.shape}")
        q = np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5)
        return cls(np.clip(q, 0, 255).astype(np.uint8).transpose(1, 2, 0))


def load_image(path):
    """Read an 8-bit RGB/RGBA PNG or a binary PPM (P6); alpha is dropped."""
    path = os.fspath(path)
    try:
        with Image.open(path) as im:
            fmt = im.format
            mode = im.mode
            if fmt not in ("PNG", "PPM"):
                raise FormatError(f"{path}: unsupported image format {fmt!r} (PNG or PPM P6 only)")
            if mode not in ("RGB", "RGBA"):
                raise FormatError(f"{path}: unsupported color type {mode!r} (8-bit RGB or RGBA only)")
            arr = np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return ImageBuffer(arr)


def save_image(path, image):
    """Write an :class:`ImageBuffer` (or ``[3, H, W]`` array) as PNG or PPM by suffix."""
    path = os.fspath(path)
    if not isinstance(image, ImageBuffer):
        image = ImageBuffer.from_array(image)
    suffix = os.path.splitext(path)[1].lower()
    formats = {".png": "PNG", ".ppm": "PPM"}
    if suffix not in formats:
        raise FormatError(f"{path}: unsupported output suffix {suffix!r} (use .png or .ppm)")
    Image.fromarray(image.pixels, mode="RGB").save(path, format=formats[suffix])


def list_images(directory):
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    return sorted(
        os.path.join(directory, f) for f in os.listdir(directory) if f.lower().endswith(IMAGE_SUFFIXES)
    )


# -- bicubic ---------------------------------------------------------------------------------


def cubic_kernel(t, a=-0.5):
    """Keys cubic convolution kernel."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def resize_weights(in_size, out_size):
    """``[out_size, in_size]`` resampling matrix for one axis.

    Half-pixel centres, kernel widened by the scale factor when
    downscaling, out-of-range taps clamped onto the edge pixel, each row
    normalised to sum to one.
    """
    if out_size < 1 or in_size < 1:
        raise DimensionError(f"resize extents must be positive, got {in_size} -> {out_size}")
    ratio = in_size / out_size
    kscale = max(ratio, 1.0)
    support = 2.0 * kscale
    weights = np.zeros((out_size, in_size))
    for i in range(out_size):
        center = (i + 0.5) * ratio - 0.5
        lo = int(math.floor(center - support))
        hi = int(math.ceil(center + support))
        taps = np.arange(lo, hi + 1)
        w = cubic_kernel((center - taps) / kscale)
        np.add.at(weights[i], np.clip(taps, 0, in_size - 1), w)
        weights[i] /= weights[i].sum()
    return weights


def bicubic_resize(image, out_h, out_w):
    """Separable bicubic resize of the last two axes."""
    x = np.asarray(image, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"target extent must be positive, got {out_h}x{out_w}")
    wy = resize_weights(x.shape[-2], out_h)
    wx = resize_weights(x.shape[-1], out_w)
    return np.einsum("ij,...jk,lk->...il", wy, x, wx, optimize=True)


def make_lr_hr_pair(hr):
    """``(bicubic_resize(hr, h/4, w/4), hr)`` for ``[..., h, w]`` HR input."""
    hr = np.asarray(hr, dtype=np.float64)
    h, w = hr.shape[-2:]
    if h % SCALE or w % SCALE:
        raise DimensionError(f"HR extent {h}x{w} is not divisible by {SCALE}")
    return bicubic_resize(hr, h // SCALE, w // SCALE), hr


# -- sampling --------------------------------------------------------------------------------


class CropSampler:
    """Uniform random (image, corner) crops, reproducible from ``seed``."""

    def __init__(self, images, crop_size=88, seed=0, scale=SCALE, names=None):
        if scale != SCALE:
            raise ConfigError(f"scale is fixed at {SCALE}, got {scale}")
        if crop_size < SCALE or crop_size % SCALE:
            raise ConfigError(f"crop_size must be a positive multiple of {SCALE}, got {crop_size}")
        if not len(images):
            raise ConfigError("dataset is empty")
        names = list(names) if names is not None else [f"image {i}" for i in range(len(images))]
        self.images = []
        for name, img in zip(names, images):
            arr = img.to_array() if isinstance(img, ImageBuffer) else np.asarray(img, dtype=np.float64)
            if arr.ndim != 3 or arr.shape[0] != 3:
                raise DimensionError(f"{name}: expected [3, H, W], got {arr.shape}")
            if arr.shape[1] < crop_size or arr.shape[2] < crop_size:
                raise DimensionError(
                    f"{name}: extent {arr.shape[1]}x{arr.shape[2]} is smaller than crop {crop_size}"
                )
            self.images.append(arr)
        self.names = names
        self.crop_size = crop_size
        self.scale = scale
        self.seed = seed

    @classmethod
    def from_directory(cls, directory, crop_size=88, seed=0):
        paths = list_images(directory)
        if not paths:
            raise ConfigError(f"no .png/.ppm images in {directory}")
        return cls([load_image(p) for p in paths], crop_size, seed, names=paths)

    def __len__(self):
        return len(self.images)

    def corners(self, k, batch_size):
        """``(image index, top, left)`` triples of batch ``k``."""
        rng = np.random.default_rng([self.seed, 3, k])
        out = []
        for _ in range(batch_size):
            idx = int(rng.integers(len(self.images)))
            _, h, w = self.images[idx].shape
            top = int(rng.integers(0, h - self.crop_size + 1))
            left = int(rng.integers(0, w - self.crop_size + 1))
            out.append((idx, top, left))
        return out

    def batch(self, k, batch_size):
        """``(lr [B,3,c/4,c/4], hr [B,3,c,c])`` for batch index ``k``."""
        cs = self.crop_size
        hr = np.stack(
            [self.images[i][:, t : t + cs, l : l + cs] for i, t, l in self.corners(k, batch_size)]
        )
        return make_lr_hr_pair(hr)


def batch_iter(sampler, batch_size, start=0, stop=None):
    """Yield ``(lr, hr)`` batches ``start, start+1, ...`` (forever if ``stop`` is None)."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    k = start
    while stop is None or k < stop:
        yield sampler.batch(k, batch_size)
        k += 1
