"""Reconstruction quality metrics and batch evaluation.

PSNR variants operate on [0, 1] images (clipped first, accumulated in
float64) with a 99 dB cap for exact matches. SSIM follows the common
11x11 Gaussian-window form (sigma 1.5, K1=0.01, K2=0.03) and averages
only windows that fit entirely inside the image.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import tensor as T
from .cfa import RGGB, DegradationSpec, degrade
from .tensor import Tensor

PSNR_CAP = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _clipped(a):
    return np.clip(np.asarray(a, dtype=np.float64), 0.0, 1.0)


def psnr(ref, out):
    """Peak signal-to-noise ratio in dB over every element of the pair."""
    ref = _clipped(ref)
    out = _clipped(out)
    if ref.shape != out.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {out.shape}")
    mse = np.mean((ref - out) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def cpsnr(ref, out):
    """PSNR with the MSE pooled across all three color channels."""
    ref = np.asarray(ref)
    if ref.ndim != 3 or ref.shape[0] != 3:
        raise ValueError(f"expected (3, H, W), got {ref.shape}")
    return psnr(ref, out)


def channel_psnrs(ref, out):
    """Per-channel PSNRs (r, g, b)."""
    ref = np.asarray(ref)
    out = np.asarray(out)
    if ref.ndim != 3 or ref.shape[0] != 3 or ref.shape != out.shape:
        raise ValueError("expected matching (3, H, W) arrays")
    return tuple(psnr(ref[c], out[c]) for c in range(3))


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(x, y):
    """Mean structural similarity of two grayscale images in [0, 1].

    Windows are weighted by a separable Gaussian; the map is evaluated
    only where the window fits, so inputs must be at least 11x11.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError("ssim expects two 2-D arrays of the same shape")
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    w = _gaussian_window()
    margin = SSIM_WINDOW // 2

    def filt(a):
        full = ndimage.correlate(a, w, mode="constant", cval=0.0)
        return full[margin:-margin, margin:-margin]

    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x * mu_x
    var_y = filt(y * y) - mu_y * mu_y
    cov = filt(x * y) - mu_x * mu_y
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def color_ssim(ref, out):
    """SSIM averaged over the three channels of a color pair."""
    ref = np.asarray(ref)
    out = np.asarray(out)
    if ref.ndim != 3 or ref.shape[0] != 3 or ref.shape != out.shape:
        raise ValueError("expected matching (3, H, W) arrays")
    return float(np.mean([ssim(ref[c], out[c]) for c in range(3)]))


def reconstruct(gen, img, sigma=0.0, seed=0, pattern=RGGB, clip_noise=True, index=0):
    """Degrade a clean image and run the generator on it; output clipped to [0, 1]."""
    spec = DegradationSpec(sigma=sigma, seed=seed, clip=clip_noise)
    _, packed = degrade(img, spec, pattern=pattern, index=index)
    with T.no_grad():
        out = gen.forward(Tensor(packed[None, ...], dtype=gen.dtype), mode="eval")
    return np.clip(out.data[0], 0.0, 1.0)


@dataclass
class MetricsRow:
    name: str
    sigma: float
    rpsnr: float
    gpsnr: float
    bpsnr: float
    cpsnr: float
    ssim: float


CSV_HEADER = ("image", "sigma", "rpsnr", "gpsnr", "bpsnr", "cpsnr", "ssim")


def evaluate_images(gen, items, sigma=0.0, seed=0, pattern=RGGB,
                    clip_noise=True, crop=0):
    """Score the generator on (name, clean image) pairs at one noise level.

    Each image gets its own deterministic noise draw keyed by its position
    in the list. Returns (rows, average_row); crop trims a border from both
    reference and output before scoring.
    """
    rows = []
    for index, (name, img) in enumerate(items):
        rec = reconstruct(gen, img, sigma=sigma, seed=seed, pattern=pattern,
                          clip_noise=clip_noise, index=index)
        ref = np.asarray(img, dtype=np.float64)
        if crop:
            ref = ref[:, crop:-crop, crop:-crop]
            rec = rec[:, crop:-crop, crop:-crop]
        r, g, b = channel_psnrs(ref, rec)
        rows.append(MetricsRow(name=name, sigma=float(sigma), rpsnr=r, gpsnr=g,
                               bpsnr=b, cpsnr=cpsnr(ref, rec),
                               ssim=color_ssim(_clipped(ref), rec)))
    avg = average_row(rows)
    return rows, avg


def average_row(rows):
    """Arithmetic column means over a list of rows, labelled AVG."""
    if not rows:
        raise ValueError("no rows to average")
    mean = lambda vals: float(np.mean(vals))
    return MetricsRow(
        name="AVG",
        sigma=mean([r.sigma for r in rows]),
        rpsnr=mean([r.rpsnr for r in rows]),
        gpsnr=mean([r.gpsnr for r in rows]),
        bpsnr=mean([r.bpsnr for r in rows]),
        cpsnr=mean([r.cpsnr for r in rows]),
        ssim=mean([r.ssim for r in rows]),
    )


def write_metrics_csv(path, rows, avg=None):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for row in list(rows) + ([avg] if avg is not None else []):
            writer.writerow([row.name, repr(row.sigma), repr(row.rpsnr),
                             repr(row.gpsnr), repr(row.bpsnr),
                             repr(row.cpsnr), repr(row.ssim)])
