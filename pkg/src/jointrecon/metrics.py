"""Image fidelity metrics: PSNR, SSIM, NRMSE.

Complex images are compared by magnitude throughout, so one code path
serves PET activity and MRI results alike.  PSNR is capped at 99 dB to
keep identical-image comparisons finite in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import DimensionError, ParameterError

PSNR_CAP = 99.0
SSIM_WINDOW = 7


def _magnitude(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise DimensionError(f"metric inputs must be 2-D, got {arr.shape}")
    return np.abs(arr).astype(np.float64) if np.iscomplexobj(arr) else arr.astype(np.float64)


def _pair(x, ref) -> tuple[np.ndarray, np.ndarray]:
    a, b = _magnitude(x), _magnitude(ref)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(x, ref, peak: float) -> float:
    """10 log10(peak^2 / MSE) in dB, capped at 99."""
    if not peak > 0:
        raise ParameterError("peak must be positive")
    a, b = _pair(x, ref)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak**2 / mse))


def ssim(x, ref, dynamic_range: float | None = None) -> float:
    """Mean local structural similarity with a 7x7 uniform window.

    Stability constants are C1 = (0.01 L)^2 and C2 = (0.03 L)^2 with L
    the reference's dynamic range (overridable so callers can share
    constants between symmetric comparisons).
    """
    a, b = _pair(x, ref)
    h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise DimensionError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    if dynamic_range is None:
        dynamic_range = float(b.max() - b.min())
    L = dynamic_range if dynamic_range > 0 else 1.0
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2

    def local_mean(img):
        return uniform_filter(img, SSIM_WINDOW)

    mu_a = local_mean(a)
    mu_b = local_mean(b)
    var_a = local_mean(a * a) - mu_a**2
    var_b = local_mean(b * b) - mu_b**2
    cov = local_mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    # Interior crop: only windows fully inside the image contribute.
    r = SSIM_WINDOW // 2
    return float((num / den)[r : h - r, r : w - r].mean())


def nrmse(x, ref) -> float:
    """||x - ref|| / ||ref|| on magnitudes."""
    a, b = _pair(x, ref)
    denom = float(np.linalg.norm(b))
    if denom == 0:
        raise ParameterError("reference norm is zero")
    return float(np.linalg.norm(a - b)) / denom


@dataclass(frozen=True)
class MetricRow:
    """One (sample, method, modality) metric record."""

    sample: str
    method: str
    modality: str
    psnr_db: float
    ssim: float
    nrmse: float

    def __post_init__(self):
        values = (self.psnr_db, self.ssim, self.nrmse)
        if not all(math.isfinite(v) for v in values):
            raise ParameterError("metric values must be finite")
        if self.psnr_db > PSNR_CAP:
            raise ParameterError("psnr exceeds the 99 dB cap")
