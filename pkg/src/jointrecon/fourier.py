"""Centered unitary 2-D Fourier transform and Cartesian undersampling.

The transform puts the zero frequency at array center and has unit
operator norm (Parseval holds exactly), so the adjoint equals the
inverse.  Undersampling keeps whole frequency-space columns (phase
encode lines): a per-column boolean mask, constant along the readout
dimension, selects which lines are acquired.  A central block of lines
is always retained because it carries most of the signal energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .grids import as_complex_grid
from .rng import RandomStream


@dataclass
class SamplingMask:
    """Cartesian line mask: boolean per column, True where acquired."""

    height: int
    width: int
    kept: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ParameterError("mask dimensions must be positive")
        self.kept = np.asarray(self.kept)
        if self.kept.shape != (self.width,):
            raise DimensionError(
                f"kept has shape {self.kept.shape}, expected ({self.width},)"
            )
        if self.kept.dtype != np.bool_:
            raise ParameterError("kept must be a boolean array")
        if not self.kept.any():
            raise ParameterError("mask must keep at least one line")
        if not self.kept[self.width // 2]:
            raise ParameterError("center line must be kept")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_kept(self) -> int:
        return int(self.kept.sum())

    def kept_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.kept)]

    def as_grid(self) -> np.ndarray:
        """Full (height, width) boolean array, lines repeated down rows."""
        return np.broadcast_to(self.kept, (self.height, self.width)).copy()


@dataclass
class KSpaceData:
    """Frequency-space measurements, identically zero outside the mask."""

    mask: SamplingMask
    data: np.ndarray

    def __post_init__(self):
        self.data = as_complex_grid(self.data)
        if self.data.shape != self.mask.shape:
            raise DimensionError(
                f"data shape {self.data.shape} != mask shape {self.mask.shape}"
            )
        if np.any(self.data[:, ~self.mask.kept] != 0):
            raise ParameterError("measurements outside the mask must be zero")


def make_cartesian_mask(n: int, accel: float, center_fraction: float, stream: RandomStream) -> SamplingMask:
    """Line mask on an n x n grid keeping exactly ceil(n / accel) columns.

    The ceil(n * center_fraction) central columns are always kept; the
    remaining budget is a uniform draw without replacement from the
    outer columns.  The central block starts at n//2 - block//2 so the
    zero-frequency column n//2 is always inside it.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    if accel < 1:
        raise ParameterError("acceleration must be >= 1")
    if not 0 < center_fraction < 1:
        raise ParameterError("center_fraction must lie in (0, 1)")
    n_keep = math.ceil(n / accel)
    n_center = math.ceil(n * center_fraction)
    if n_center > n_keep:
        raise ParameterError(
            f"central block ({n_center}) exceeds line budget ({n_keep})"
        )
    start = n // 2 - n_center // 2
    kept = np.zeros(n, dtype=bool)
    kept[start:start + n_center] = True
    outer = np.flatnonzero(~kept)
    n_extra = n_keep - n_center
    if n_extra > 0:
        picks = stream.choice(len(outer), size=n_extra)
        kept[outer[picks]] = True
    return SamplingMask(n, n, kept)


def fft_centered(v: np.ndarray) -> np.ndarray:
    """Unitary 2-D DFT with the zero frequency moved to array center."""
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(v), norm="ortho"))


def ifft_centered(k: np.ndarray) -> np.ndarray:
    """Inverse (= adjoint, by unitarity) of :func:`fft_centered`."""
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k), norm="ortho"))


def fourier_forward(v: np.ndarray, mask: SamplingMask) -> KSpaceData:
    """Transform ``v`` to frequency space and zero the unsampled lines."""
    v = as_complex_grid(v)
    if v.shape != mask.shape:
        raise DimensionError(f"image shape {v.shape} != mask shape {mask.shape}")
    k = fft_centered(v)
    k[:, ~mask.kept] = 0.0
    return KSpaceData(mask, k)


def fourier_adjoint(g: KSpaceData) -> np.ndarray:
    """Exact adjoint of :func:`fourier_forward`.

    Measurements are already zero off the mask, so this is the inverse
    centered transform of the data array.
    """
    return ifft_centered(g.data)
