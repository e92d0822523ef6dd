"""Reconstruction-quality metrics: MSE, PSNR, SSIM and SI-SNR.

All functions take float arrays and are pure. PSNR assumes signals
normalized to [0, 1] (peak = 1); a perfect reconstruction returns the
+inf sentinel, which CSV writers serialize as the string "inf".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricRecord:
    """One evaluation of a reconstruction against its target."""

    mse: float
    psnr: float
    ssim: float | None = None
    si_snr: float | None = None


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def psnr_from_mse(err: float) -> float:
    """PSNR in dB for a known mean squared error, peak fixed at 1.0."""
    if err < 0.0:
        raise ValueError("mse must be nonnegative")
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / err))


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB, peak fixed at 1.0.

    Returns +inf when the reconstruction is exact (MSE = 0).
    """
    return psnr_from_mse(mse(pred, target))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean structural similarity over Gaussian-weighted local windows.

    11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1.0.
    Windowed statistics use valid-mode convolution, so inputs must be at
    least 11x11. For multi-channel images pass each channel separately and
    average (see ssim_multichannel).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim != 2:
        raise ValueError("ssim expects 2D single-channel images")
    if min(pred.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {pred.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )

    w = _gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2

    mu1 = convolve2d(pred, w, mode="valid")
    mu2 = convolve2d(target, w, mode="valid")
    mu1_sq = mu1 * mu1
    mu2_sq = mu2 * mu2
    mu12 = mu1 * mu2
    sigma1_sq = convolve2d(pred * pred, w, mode="valid") - mu1_sq
    sigma2_sq = convolve2d(target * target, w, mode="valid") - mu2_sq
    sigma12 = convolve2d(pred * target, w, mode="valid") - mu12

    num = (2.0 * mu12 + c1) * (2.0 * sigma12 + c2)
    den = (mu1_sq + mu2_sq + c1) * (sigma1_sq + sigma2_sq + c2)
    return float(np.mean(num / den))


def ssim_multichannel(pred: np.ndarray, target: np.ndarray) -> float:
    """SSIM for HxWxC images: mean of per-channel SSIM."""
    if pred.ndim == 2:
        return ssim(pred, target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean([ssim(pred[..., c], target[..., c]) for c in range(pred.shape[-1])]))


def si_snr(pred: np.ndarray, target: np.ndarray) -> float:
    """Scale-invariant signal-to-noise ratio in dB.

    Both signals are mean-removed, the prediction is projected onto the
    target, and the ratio of projected power to residual power is reported.
    Collinear signals (up to rounding) return the +inf sentinel. A constant
    target has no defined projection and raises ValueError.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size < 2:
        raise ValueError("si_snr needs at least 2 samples")

    p = pred - pred.mean()
    t = target - target.mean()
    t_energy = float(np.dot(t, t))
    if t_energy == 0.0:
        raise ValueError("constant target: projection undefined")

    s_target = (np.dot(p, t) / t_energy) * t
    e = p - s_target
    e_energy = float(np.dot(e, e))
    s_energy = float(np.dot(s_target, s_target))
    # Scaled copies of the target leave only rounding noise in the
    # residual (relative energy ~1e-31); treat that as an exact match.
    if e_energy <= 1e-24 * s_energy:
        return float("inf")
    return float(10.0 * np.log10(s_energy / e_energy))
