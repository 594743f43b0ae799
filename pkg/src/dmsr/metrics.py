"""Image-quality metrics: PSNR, SSIM, and normalized error maps.

These are evaluation-only and operate on plain numpy values (Tensors are
accepted and unwrapped); no gradients flow here.
"""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_2d(x) -> np.ndarray:
    a = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    a = np.squeeze(a)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {a.shape}")
    return np.asarray(a, dtype=np.float64)


def psnr(sr, hr, data_range: float = 1.0) -> float:
    """10 log10(range^2 / MSE), capped at 100 dB for identical images."""
    a, b = _as_2d(sr), _as_2d(hr)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(data_range ** 2 / mse))


def _gaussian_window(size: int = SSIM_WINDOW,
                     sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Valid-mode 2-D correlation with a small window."""
    k = win.shape[0]
    ho, wo = img.shape[0] - k + 1, img.shape[1] - k + 1
    out = np.zeros((ho, wo))
    for i in range(k):
        for j in range(k):
            out += win[i, j] * img[i:i + ho, j:j + wo]
    return out


def ssim(sr, hr, data_range: float = 1.0) -> float:
    """Mean structural similarity over valid 11x11 Gaussian windows."""
    a, b = _as_2d(sr), _as_2d(hr)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise DimensionError(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} "
            f"SSIM window")
    win = _gaussian_window()
    mu1 = _filter_valid(a, win)
    mu2 = _filter_valid(b, win)
    s11 = _filter_valid(a * a, win) - mu1 * mu1
    s22 = _filter_valid(b * b, win) - mu2 * mu2
    s12 = _filter_valid(a * b, win) - mu1 * mu2
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 ** 2 + mu2 ** 2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


def error_map(sr, hr) -> np.ndarray:
    """|sr - hr| normalized to [0, 1] by its max (zeros when identical)."""
    a, b = _as_2d(sr), _as_2d(hr)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    d = np.abs(a - b)
    m = d.max()
    return d / m if m > 0 else d
