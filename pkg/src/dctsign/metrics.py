"""Image quality metrics and the neighbour-difference Laplacian fit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate2d

__all__ = ["MetricsReport", "psnr", "ssim", "laplacian_b_mle", "neighbor_differences", "report"]

PEAK = 255.0


def _samples(img):
    return np.asarray(getattr(img, "samples", img), dtype=float)


def psnr(ref, test, peak=PEAK):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a, b = _samples(ref), _samples(test)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(ref, test, data_range=PEAK, k1=0.01, k2=0.03, win_size=11, sigma=1.5):
    """Mean single-scale SSIM over all fully-contained Gaussian windows."""
    a, b = _samples(ref), _samples(test)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < win_size:
        raise ValueError(f"images must be at least {win_size}x{win_size} for SSIM")
    w = _gaussian_window(win_size, sigma)

    def filt(x):
        return correlate2d(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def neighbor_differences(img):
    """Horizontal and vertical differences between 4-neighbour pixels."""
    x = _samples(img)
    return np.concatenate([np.diff(x, axis=1).ravel(), np.diff(x, axis=0).ravel()])


def laplacian_b_mle(samples):
    """Scale of a zero-mean Laplacian fitted by maximum likelihood: mean |Z|."""
    z = np.asarray(samples, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("need at least one sample")
    return float(np.mean(np.abs(z)))


@dataclass(frozen=True)
class MetricsReport:
    psnr: float
    ssim: float
    laplacian_b: float | None = None

    def as_dict(self):
        return {"psnr": self.psnr, "ssim": self.ssim, "laplacian_b": self.laplacian_b}


def report(ref, test, with_laplacian=False):
    b = laplacian_b_mle(neighbor_differences(test)) if with_laplacian else None
    return MetricsReport(psnr(ref, test), ssim(ref, test), b)
