"""Evaluation metrics: SSIM, PSNR, discriminator accuracy, angular error.

Image metrics operate on [0, 1] arrays; normal fields are mapped there with
``to_unit_interval`` ((v + 1) / 2 per channel) before comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .core import angular_error

#: Returned by ``psnr`` when the mean squared error underflows (< 1e-12).
PSNR_CAP = 120.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    ssim: float
    psnr: float
    disc_accuracy: float
    mean_angular_error: float
    epoch: int = 0


def to_unit_interval(vectors) -> np.ndarray:
    """Map [-1, 1] vector components to [0, 1] image samples."""
    return (np.asarray(vectors, dtype=np.float64) + 1.0) / 2.0


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-d Gaussian weighting window."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _ssim_single(a, b, window, c1, c2):
    mu1 = convolve2d(a, window, mode="valid")
    mu2 = convolve2d(b, window, mode="valid")
    s11 = convolve2d(a * a, window, mode="valid") - mu1 * mu1
    s22 = convolve2d(b * b, window, mode="valid") - mu2 * mu2
    s12 = convolve2d(a * b, window, mode="valid") - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return num / den


def ssim(a, b) -> float:
    """Structural similarity between two [0, 1] images.

    Uses the standard 11x11 Gaussian window with sigma 1.5, K1 = 0.01,
    K2 = 0.03 and data range 1, averaged over window positions and
    channels.  Accepts (H, W) or (H, W, C) arrays.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, "
                         f"got {a.shape[:2]}")
    window = gaussian_window()
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    maps = [_ssim_single(a[..., k], b[..., k], window, c1, c2)
            for k in range(a.shape[2])]
    return float(np.mean(maps))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images (range 1).

    Capped at ``PSNR_CAP`` when the MSE underflows, so identical images
    compare as the cap instead of infinity.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return PSNR_CAP
    return 10.0 * np.log10(1.0 / mse)


def discriminator_accuracy(real_probs, fake_probs) -> float:
    """Fraction of correct calls at threshold 0.5; ties count as "fake".

    Real images are correct when p > 0.5, generated ones when p <= 0.5.
    """
    real = np.asarray(real_probs, dtype=np.float64).ravel()
    fake = np.asarray(fake_probs, dtype=np.float64).ravel()
    total = real.size + fake.size
    if total == 0:
        raise ValueError("no probabilities given")
    correct = int(np.sum(real > 0.5)) + int(np.sum(fake <= 0.5))
    return correct / total


def masked_mean_angular_error(target_vectors, predicted_vectors,
                              occluded) -> float:
    """Mean angular error in degrees over the occluded pixels only."""
    occluded = np.asarray(occluded, dtype=bool)
    if not occluded.any():
        return 0.0
    errors = angular_error(np.asarray(target_vectors)[occluded],
                           np.asarray(predicted_vectors)[occluded])
    return float(np.mean(errors))
