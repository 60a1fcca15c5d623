"""Image grids, inner products, and the JRG1 binary grid format.

A real grid is a 2-D float64 ndarray (PET activity); a complex grid is a
2-D complex128 ndarray (MRI image or k-space).  Grids are treated as
immutable values once built.  On disk they are stored in the "JRG1"
format: an 8-byte magic, one JSON header line, then a row-major
little-endian float32 payload (complex grids interleave re, im).  Memory
precision is 64-bit; serialization rounds to 32-bit, and round-trips are
bit-exact at that granularity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, GridFormatError

MAGIC = b"JRGRID01"

_DTYPE_REAL = "f32"
_DTYPE_COMPLEX = "c64as2f32"


def as_real_grid(data) -> np.ndarray:
    """Validate and return a 2-D float64 grid."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"real grid must be 2-D, got shape {arr.shape}")
    return arr


def as_complex_grid(data) -> np.ndarray:
    """Validate and return a 2-D complex128 grid."""
    arr = np.asarray(data, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionError(f"complex grid must be 2-D, got shape {arr.shape}")
    return arr


def inner_product(a: np.ndarray, b: np.ndarray):
    """Inner product <a, b>, conjugate-linear in the first argument.

    For real grids this is the plain sum of products; for complex grids
    it returns sum(conj(a) * b).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = np.vdot(a, b)
    return out if np.iscomplexobj(a) or np.iscomplexobj(b) else float(out.real)


@dataclass
class ImagePair:
    """Joint unknown: PET activity grid plus complex MRI grid, same raster.

    Shape agreement is enforced on construction.  PET nonnegativity is a
    contract of *clean* pairs (phantoms, final reconstructions); noisy
    diffusion intermediates legitimately carry negative PET values, so it
    is checked by :meth:`validate`, not the constructor.
    """

    pet: np.ndarray
    mri: np.ndarray

    def __post_init__(self):
        self.pet = as_real_grid(self.pet)
        self.mri = as_complex_grid(self.mri)
        if self.pet.shape != self.mri.shape:
            raise DimensionError(
                f"PET shape {self.pet.shape} != MRI shape {self.mri.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.pet.shape

    def validate(self) -> "ImagePair":
        """Assert the clean-pair contract: finite entries, PET >= 0."""
        if not (np.all(np.isfinite(self.pet)) and np.all(np.isfinite(self.mri))):
            raise ValueError("image pair contains non-finite entries")
        if np.any(self.pet < 0):
            raise ValueError("PET activity must be nonnegative")
        return self


def pair_to_channels(pair: ImagePair) -> np.ndarray:
    """Stack a pair as a (3, h, w) float array: PET, MRI-re, MRI-im."""
    return np.stack([pair.pet, pair.mri.real, pair.mri.imag])


def channels_to_pair(channels: np.ndarray) -> ImagePair:
    """Inverse of :func:`pair_to_channels`."""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim != 3 or channels.shape[0] != 3:
        raise DimensionError(f"expected (3, h, w) channels, got {channels.shape}")
    return ImagePair(channels[0], channels[1] + 1j * channels[2])


def save_grid(grid: np.ndarray, path) -> None:
    """Write a grid to ``path`` in the JRG1 format (float32 payload)."""
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise DimensionError(f"grid must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    if np.iscomplexobj(arr):
        dtype = _DTYPE_COMPLEX
        payload = np.empty((h, w, 2), dtype="<f4")
        payload[..., 0] = arr.real
        payload[..., 1] = arr.imag
    else:
        dtype = _DTYPE_REAL
        payload = np.asarray(arr, dtype="<f4")
    header = json.dumps({"dtype": dtype, "height": h, "width": w}) + "\n"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("utf-8"))
        fh.write(payload.tobytes())


def load_grid(path) -> np.ndarray:
    """Read a JRG1 grid; returns float64 or complex128 per the header."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise GridFormatError(f"{path}: bad magic")
    nl = raw.find(b"\n", len(MAGIC))
    if nl < 0:
        raise GridFormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[len(MAGIC) : nl].decode("utf-8"))
        dtype = header["dtype"]
        h = int(header["height"])
        w = int(header["width"])
    except (ValueError, KeyError, TypeError) as exc:
        raise GridFormatError(f"{path}: invalid header: {exc}") from exc
    if h < 0 or w < 0:
        raise GridFormatError(f"{path}: negative dimensions")
    payload = raw[nl + 1 :]
    if dtype == _DTYPE_REAL:
        expect = h * w * 4
    elif dtype == _DTYPE_COMPLEX:
        expect = h * w * 8
    else:
        raise GridFormatError(f"{path}: unknown dtype {dtype!r}")
    if len(payload) != expect:
        raise GridFormatError(
            f"{path}: payload has {len(payload)} bytes, expected {expect}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    if dtype == _DTYPE_REAL:
        out = flat.reshape(h, w).astype(np.float64)
    else:
        pairs = flat.reshape(h, w, 2).astype(np.float64)
        out = pairs[..., 0] + 1j * pairs[..., 1]
    if not np.all(np.isfinite(flat)):
        raise GridFormatError(f"{path}: non-finite payload entries")
    return out
