"""Image quality metrics over float images in [0, 1].

Parameters
----------
Both metrics take (H, W) or (H, W, C) arrays of matching shape. PSNR uses
peak 1.0 and returns +inf for identical inputs. SSIM uses an 11x11
Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03, and averages the
map over valid window centers only (no padding).
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from ..errors import ContractError


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"image shapes disagree: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if a.ndim != 3:
        raise ContractError(f"expected (H, W) or (H, W, C) images, got {a.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are identical."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    peak: float = 1.0,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    a, b = _check_pair(a, b)
    if a.shape[0] < window_size or a.shape[1] < window_size:
        raise ContractError(
            f"images {a.shape[:2]} smaller than the {window_size}x{window_size} window"
        )
    win = _gaussian_window(window_size, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    vals = []
    for ch in range(a.shape[2]):
        x = a[..., ch]
        y = b[..., ch]
        mu_x = convolve2d(x, win, mode="valid")
        mu_y = convolve2d(y, win, mode="valid")
        xx = convolve2d(x * x, win, mode="valid") - mu_x * mu_x
        yy = convolve2d(y * y, win, mode="valid") - mu_y * mu_y
        xy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
        vals.append(float(np.mean(num / den)))
    return float(np.mean(vals))
