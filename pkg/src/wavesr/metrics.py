"""Full-reference image quality metrics and dataset reports.

All metrics take float arrays. ``psnr`` works on any shape; the windowed
metrics (``ssim``, ``fsim``, ``uiq``) and LBP work on a single 2-D
grayscale plane. :func:`evaluate_pair` handles color: Y channel (BT.601)
with a border crop by default, or per-channel means in ``"rgb"`` mode.
"""
import csv
import io
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.signal import convolve2d
from scipy.ndimage import maximum_filter, minimum_filter

from . import data as imgdata
from .errors import ConfigError, DimensionError

PSNR_CAP = 99.0
LBP_EPS = 1e-10
UIQ_WINDOW = 8
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
FSIM_MIN_EXTENT = 32
Y_WEIGHTS = np.array([0.299, 0.587, 0.114])
CSV_HEADER = ("id", "psnr", "ssim", "fsim", "uiq", "lbp_chi2")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _plane_pair(a, b, min_extent, what):
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise DimensionError(f"{what} expects a 2-D grayscale plane, got shape {a.shape}")
    if min(a.shape) < min_extent:
        raise DimensionError(f"{what} needs extents >= {min_extent}, got {a.shape[0]}x{a.shape[1]}")
    return a, b


# -- PSNR / SSIM -----------------------------------------------------------------------------


def psnr(a, b, data_range=1.0):
    """``10 log10(range^2 / MSE)`` in dB; identical inputs give ``PSNR_CAP``."""
    a, b = _pair(a, b)
    if data_range <= 0:
        raise ConfigError(f"data_range must be positive, got {data_range}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(data_range**2 / mse)))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, data_range=1.0):
    """Mean SSIM over all valid 11x11 Gaussian-window positions."""
    a, b = _plane_pair(a, b, SSIM_WINDOW, "ssim")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    win = gaussian_window()

    def filt(x):
        return convolve2d(x, win, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# -- UIQ -------------------------------------------------------------------------------------


def uiq(a, b):
    """Universal quality index averaged over 8x8 windows at stride 1.

    A window whose denominator is zero counts as 1 when both windows are
    identical and is skipped otherwise. If every window is skipped the
    result is 0.
    """
    a, b = _plane_pair(a, b, UIQ_WINDOW, "uiq")
    n = UIQ_WINDOW
    box = np.full((n, n), 1.0 / (n * n))

    def filt(x):
        return convolve2d(x, box, mode="valid")

    def constant(x):
        # exact test; moment arithmetic leaves ulp-sized variances on flat windows
        lo = minimum_filter(x, size=n, mode="nearest")
        hi = maximum_filter(x, size=n, mode="nearest")
        o = n // 2
        return (hi == lo)[o : o + x.shape[0] - n + 1, o : o + x.shape[1] - n + 1]

    mu_a, mu_b = filt(a), filt(b)
    ca = a - a.mean()
    cb = b - b.mean()
    ma, mb = filt(ca), filt(cb)
    var_a = np.maximum(filt(ca * ca) - ma * ma, 0.0)
    var_b = np.maximum(filt(cb * cb) - mb * mb, 0.0)
    cov = filt(ca * cb) - ma * mb
    flat_a, flat_b = constant(a), constant(b)
    var_a[flat_a] = 0.0
    var_b[flat_b] = 0.0
    cov[flat_a | flat_b] = 0.0

    den = (var_a + var_b) * (mu_a * mu_a + mu_b * mu_b)
    ok = den != 0
    q = np.zeros_like(den)
    q[ok] = 4.0 * cov[ok] * mu_a[ok] * mu_b[ok] / den[ok]
    n_valid = int(ok.sum())
    total = float(q[ok].sum())
    if not ok.all():
        diff = np.abs(a - b)
        o = n // 2
        dmax = maximum_filter(diff, size=n, mode="nearest")[o : o + den.shape[0], o : o + den.shape[1]]
        same = (~ok) & (dmax == 0)
        n_valid += int(same.sum())
        total += float(same.sum())
    if n_valid == 0:
        return 0.0
    return total / n_valid


def uiq_window(a, b):
    """Q for one window given as two equal-shape arrays (no zero-denominator rule)."""
    a, b = _pair(a, b)
    ma, mb = a.mean(), b.mean()
    va, vb = np.mean((a - ma) ** 2), np.mean((b - mb) ** 2)
    cov = np.mean((a - ma) * (b - mb))
    return float(4 * cov * ma * mb / ((va + vb) * (ma * ma + mb * mb)))


# -- FSIM ------------------------------------------------------------------------------------

FSIM_T1 = 0.85
FSIM_T2 = 160.0
PC_SCALES = 4
PC_ORIENTS = 4
PC_MIN_WAVELENGTH = 6
PC_MULT = 2
PC_SIGMA_ON_F = 0.55
PC_D_THETA_ON_SIGMA = 1.2
PC_K = 2.0
PC_EPS = 1e-4
PC_NOISE_DIVISOR = 1.7
SCHARR_X = np.array([[3, 0, -3], [10, 0, -10], [3, 0, -3]]) / 16.0
SCHARR_Y = SCHARR_X.T.copy()


def _freq_grid(n):
    if n % 2:
        return np.arange(-(n - 1) / 2, (n - 1) / 2 + 1) / (n - 1)
    return np.arange(-n / 2, n / 2) / n


def _lowpass(rows, cols, cutoff=0.45, order=15):
    x, y = np.meshgrid(_freq_grid(cols), _freq_grid(rows))
    radius = np.sqrt(x * x + y * y)
    return np.fft.ifftshift(1.0 / (1.0 + (radius / cutoff) ** (2 * order)))


def phase_congruency(im):
    """Phase congruency map (log-Gabor bank, 4 scales x 4 orientations)."""
    im = np.asarray(im, dtype=np.float64)
    rows, cols = im.shape
    spectrum = np.fft.fft2(im)
    x, y = np.meshgrid(_freq_grid(cols), _freq_grid(rows))
    radius = np.fft.ifftshift(np.sqrt(x * x + y * y))
    theta = np.fft.ifftshift(np.arctan2(-y, x))
    radius[0, 0] = 1.0
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    lp = _lowpass(rows, cols)

    log_gabor = []
    for s in range(PC_SCALES):
        fo = 1.0 / (PC_MIN_WAVELENGTH * PC_MULT**s)
        g = np.exp(-(np.log(radius / fo) ** 2) / (2 * np.log(PC_SIGMA_ON_F) ** 2)) * lp
        g[0, 0] = 0.0
        log_gabor.append(g)

    theta_sigma = np.pi / PC_ORIENTS / PC_D_THETA_ON_SIGMA
    energy_all = np.zeros((rows, cols))
    an_all = np.zeros((rows, cols))
    for o in range(PC_ORIENTS):
        angle = o * np.pi / PC_ORIENTS
        ds = sin_t * np.cos(angle) - cos_t * np.sin(angle)
        dc = cos_t * np.cos(angle) + sin_t * np.sin(angle)
        spread = np.exp(-(np.abs(np.arctan2(ds, dc)) ** 2) / (2 * theta_sigma**2))

        eo, spatial = [], []
        sum_e = np.zeros((rows, cols))
        sum_o = np.zeros((rows, cols))
        sum_an = np.zeros((rows, cols))
        em_n = 0.0
        for s in range(PC_SCALES):
            filt = log_gabor[s] * spread
            spatial.append(np.real(np.fft.ifft2(filt)) * np.sqrt(rows * cols))
            resp = np.fft.ifft2(spectrum * filt)
            eo.append(resp)
            sum_an += np.abs(resp)
            sum_e += resp.real
            sum_o += resp.imag
            if s == 0:
                em_n = float(np.sum(filt * filt))

        x_energy = np.sqrt(sum_e**2 + sum_o**2) + PC_EPS
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = np.zeros((rows, cols))
        for resp in eo:
            e, od = resp.real, resp.imag
            energy += e * mean_e + od * mean_o - np.abs(e * mean_o - od * mean_e)

        # noise statistics from the finest scale, assuming Rayleigh-distributed amplitude
        median_e2n = np.median(np.abs(eo[0]) ** 2)
        mean_e2n = -median_e2n / np.log(0.5)
        noise_power = mean_e2n / em_n
        sum_an2 = sum(f * f for f in spatial).sum()
        sum_aiaj = 0.0
        for i in range(PC_SCALES - 1):
            for j in range(i + 1, PC_SCALES):
                sum_aiaj += float(np.sum(spatial[i] * spatial[j]))
        noise_energy2 = 2 * noise_power * sum_an2 + 4 * noise_power * sum_aiaj
        tau = np.sqrt(noise_energy2 / 2)
        threshold = tau * np.sqrt(np.pi / 2) + PC_K * np.sqrt((2 - np.pi / 2) * tau**2)
        threshold /= PC_NOISE_DIVISOR

        energy_all += np.maximum(energy - threshold, 0.0)
        an_all += sum_an

    pc = np.zeros((rows, cols))
    nz = an_all > 0
    pc[nz] = energy_all[nz] / an_all[nz]
    return pc


def _same_conv(x, k):
    """``conv2(x, k, 'same')`` with the centring used by the reference code."""
    full = convolve2d(x, k, mode="full")
    r0, c0 = k.shape[0] // 2, k.shape[1] // 2
    return full[r0 : r0 + x.shape[0], c0 : c0 + x.shape[1]]


def _fsim_prepare(x):
    rows, cols = x.shape
    f = max(1, int(np.round(min(rows, cols) / 256)))
    if f > 1:
        x = _same_conv(x, np.full((f, f), 1.0 / (f * f)))[::f, ::f]
    return x


def fsim(a, b, data_range=1.0):
    """Luminance FSIM: phase-congruency-weighted PC and gradient similarity."""
    a, b = _plane_pair(a, b, FSIM_MIN_EXTENT, "fsim")
    scale = 255.0 / data_range
    y1 = _fsim_prepare(a * scale)
    y2 = _fsim_prepare(b * scale)
    pc1, pc2 = phase_congruency(y1), phase_congruency(y2)
    g1 = np.hypot(_same_conv(y1, SCHARR_X), _same_conv(y1, SCHARR_Y))
    g2 = np.hypot(_same_conv(y2, SCHARR_X), _same_conv(y2, SCHARR_Y))
    s_pc = (2 * pc1 * pc2 + FSIM_T1) / (pc1**2 + pc2**2 + FSIM_T1)
    s_g = (2 * g1 * g2 + FSIM_T2) / (g1**2 + g2**2 + FSIM_T2)
    pcm = np.maximum(pc1, pc2)
    weight = pcm.sum()
    if weight == 0:
        # no phase structure in either image (flat inputs)
        return float(np.mean(s_g * s_pc))
    return float(np.sum(s_g * s_pc * pcm) / weight)


# -- LBP -------------------------------------------------------------------------------------

# clockwise from top-left; neighbour k contributes bit 2**k
LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def lbp_codes(image):
    """8-bit code per interior pixel, ``[H-2, W-2]``."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"lbp expects a 2-D grayscale plane, got shape {x.shape}")
    h, w = x.shape
    if h < 3 or w < 3:
        raise DimensionError(f"lbp needs extents >= 3, got {h}x{w}")
    center = x[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.int64)
    for k, (dy, dx) in enumerate(LBP_OFFSETS):
        neigh = x[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
        codes |= (neigh >= center).astype(np.int64) << k
    return codes


def lbp_histogram(image):
    return np.bincount(lbp_codes(image).ravel(), minlength=256).astype(np.int64)


def lbp_distance(h1, h2):
    """Chi-square distance between normalised histograms; in [0, 2]."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise DimensionError(f"histogram bins differ: {h1.shape} vs {h2.shape}")
    p = h1 / h1.sum() if h1.sum() > 0 else h1
    q = h2 / h2.sum() if h2.sum() > 0 else h2
    return float(np.sum((p - q) ** 2 / (p + q + LBP_EPS)))


# -- reports ---------------------------------------------------------------------------------


def to_y(image):
    """BT.601 luma of a ``[3, H, W]`` image."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise DimensionError(f"expected [3, H, W] for Y conversion, got {x.shape}")
    return np.tensordot(Y_WEIGHTS, x, axes=1)


@dataclass
class MetricRow:
    id: str
    psnr: float
    ssim: float
    fsim: float
    uiq: float
    lbp_chi2: float

    def values(self):
        return (self.psnr, self.ssim, self.fsim, self.uiq, self.lbp_chi2)


@dataclass
class MetricReport:
    rows: List[MetricRow] = field(default_factory=list)
    mode: str = "y"
    border: int = 4
    data_range: float = 1.0
    dataset: str = ""
    scale: int = 4

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.id)

    @property
    def aggregate(self):
        if not self.rows:
            return MetricRow("mean", *([float("nan")] * 5))
        vals = np.array([r.values() for r in self.rows])
        return MetricRow("mean", *(float(v) for v in vals.mean(axis=0)))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.id] + [repr(float(v)) for v in r.values()])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    def format_table(self):
        width = max([len(r.id) for r in self.rows] + [4])
        head = f"{'id':<{width}}  {'psnr':>8}  {'ssim':>7}  {'fsim':>7}  {'uiq':>7}  {'lbp_chi2':>9}"
        lines = [
            f"dataset={self.dataset or '-'} scale={self.scale} mode={self.mode} "
            f"border={self.border if self.mode == 'y' else 0} range={self.data_range:g}",
            head,
            "-" * len(head),
        ]
        for r in self.rows + [self.aggregate]:
            lines.append(
                f"{r.id:<{width}}  {r.psnr:8.3f}  {r.ssim:7.4f}  {r.fsim:7.4f}  {r.uiq:7.4f}  {r.lbp_chi2:9.5f}"
            )
        return "\n".join(lines)


def _planes(sr, hr, mode, border):
    if mode == "y":
        a, b = to_y(sr), to_y(hr)
        if border:
            if min(a.shape) <= 2 * border:
                raise DimensionError(f"extent {a.shape[0]}x{a.shape[1]} too small for border crop {border}")
            a = a[border:-border, border:-border]
            b = b[border:-border, border:-border]
        return [a], [b]
    if mode == "rgb":
        return list(sr), list(hr)
    raise ConfigError(f"unknown color mode {mode!r} (use 'y' or 'rgb')")


def evaluate_pair(sr, hr, mode="y", border=4, data_range=1.0, image_id=""):
    """All five metrics for one ``[3, H, W]`` pair."""
    sr, hr = _pair(sr, hr)
    pa, pb = _planes(sr, hr, mode, border)
    p = psnr(np.stack(pa), np.stack(pb), data_range)
    s = np.mean([ssim(x, y, data_range) for x, y in zip(pa, pb)])
    f = np.mean([fsim(x, y, data_range) for x, y in zip(pa, pb)])
    u = np.mean([uiq(x, y) for x, y in zip(pa, pb)])
    l = np.mean([lbp_distance(lbp_histogram(x), lbp_histogram(y)) for x, y in zip(pa, pb)])
    return MetricRow(image_id, float(p), float(s), float(f), float(u), float(l))


def _counterpart(directory, name):
    path = os.path.join(directory, name)
    if os.path.exists(path):
        return path
    stem = os.path.splitext(name)[0]
    for suffix in imgdata.IMAGE_SUFFIXES:
        alt = os.path.join(directory, stem + suffix)
        if os.path.exists(alt):
            return alt
    raise FileNotFoundError(f"no counterpart for {name} in {directory}")


def evaluate_dataset(sr_dir, hr_dir, mode="y", border=4, data_range=1.0, dataset=None):
    """Pair every HR image with the SR file of the same name and score it."""
    rows = []
    for hr_path in imgdata.list_images(hr_dir):
        name = os.path.basename(hr_path)
        sr_path = _counterpart(sr_dir, name)
        hr = imgdata.load_image(hr_path).to_array()
        sr = imgdata.load_image(sr_path).to_array()
        if sr.shape != hr.shape:
            raise DimensionError(
                f"{name}: SR extent {sr.shape[1]}x{sr.shape[2]} != HR extent {hr.shape[1]}x{hr.shape[2]}"
            )
        rows.append(evaluate_pair(sr, hr, mode, border, data_range, image_id=name))
    if dataset is None:
        dataset = os.path.basename(os.path.normpath(hr_dir))
    return MetricReport(rows, mode, border, data_range, dataset)
