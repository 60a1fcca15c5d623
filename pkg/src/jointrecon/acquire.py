"""Measurement simulation and dataset persistence.

PET measurements are Poisson counts with rate c * (A u), where c scales
the noiseless projection so its total equals ``counts_target``; c is
recorded on the returned sinogram so reconstruction can convert counts
back to the activity scale.  MRI measurements are the masked centered
Fourier transform plus complex Gaussian noise.

A dataset on disk is a root directory with one subdirectory per sample
(ground-truth pair, sinogram, k-space, mask and geometry sidecars) and a
manifest.json tying together schema version, master seed, and config.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import MissingInputError, ParameterError, SimulationError
from .fourier import KSpaceData, SamplingMask, fft_centered, make_cartesian_mask
from .grids import ImagePair, load_grid, save_grid
from .phantoms import PhantomSpec, make_phantom_pair
from .radon import RadonGeometry, Sinogram, radon_forward
from .rng import RandomStream

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AcquisitionConfig:
    """Noise and undersampling settings for one simulated scan.

    ``noiseless`` makes simulate_pet return expected counts instead of
    Poisson draws; MRI noise is controlled solely by ``mri_noise_std``.
    """

    counts_target: float = 1e5
    mri_noise_std: float = 0.01
    accel: float = 3.0
    center_fraction: float = 0.08
    noiseless: bool = False

    def __post_init__(self):
        if not self.counts_target > 0:
            raise ParameterError("counts_target must be positive")
        if self.mri_noise_std < 0:
            raise ParameterError("mri_noise_std must be >= 0")
        if self.accel < 1:
            raise ParameterError("accel must be >= 1")
        if not 0 < self.center_fraction < 1:
            raise ParameterError("center_fraction must lie in (0, 1)")


def simulate_pet(u: np.ndarray, geom: RadonGeometry, cfg: AcquisitionConfig, stream: RandomStream) -> Sinogram:
    """Simulate sinogram counts from activity image ``u``.

    The expected-counts sinogram is c * (A u) with c = counts_target /
    sum(A u); the returned sinogram carries c in its ``scale`` field.
    """
    if np.any(u < 0):
        raise ParameterError("activity image must be nonnegative")
    proj = radon_forward(u, geom)
    total = proj.data.sum()
    if total <= 0:
        raise SimulationError("projection carries no mass, cannot scale counts")
    c = cfg.counts_target / total
    lam = c * proj.data
    data = lam if cfg.noiseless else stream.poisson(lam)
    return Sinogram(geom, data, scale=c)


def simulate_mri(v: np.ndarray, mask: SamplingMask, cfg: AcquisitionConfig, stream: RandomStream) -> KSpaceData:
    """Masked k-space of ``v`` plus complex Gaussian noise.

    Noise has standard deviation ``mri_noise_std`` per real component
    and is added before masking, so kept lines are noisy and dropped
    lines are exactly zero.
    """
    k = fft_centered(np.asarray(v, dtype=np.complex128))
    if k.shape != mask.shape:
        raise ParameterError(f"image shape {k.shape} != mask shape {mask.shape}")
    if cfg.mri_noise_std > 0:
        noise = stream.normal(2 * k.size).reshape(2, *k.shape)
        k = k + cfg.mri_noise_std * (noise[0] + 1j * noise[1])
    k[:, ~mask.kept] = 0.0
    return KSpaceData(mask, k)


@dataclass
class Sample:
    """One dataset entry loaded back from disk."""

    truth: ImagePair
    sinogram: Sinogram
    kspace: KSpaceData
    path: Path


def _geometry_to_json(geom: RadonGeometry) -> dict:
    return {
        "image_size": geom.image_size,
        "n_detectors": geom.n_detectors,
        "angles": list(geom.angles),
    }


def _geometry_from_json(d: dict) -> RadonGeometry:
    return RadonGeometry(int(d["image_size"]), int(d["n_detectors"]), tuple(d["angles"]))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def write_sample(dirpath: Path, truth: ImagePair, sino: Sinogram, kspace: KSpaceData, cfg: AcquisitionConfig) -> None:
    dirpath.mkdir(parents=True, exist_ok=True)
    save_grid(truth.pet, dirpath / "pet.jrg")
    save_grid(truth.mri, dirpath / "mri.jrg")
    save_grid(sino.data, dirpath / "sino.jrg")
    save_grid(kspace.data, dirpath / "kspace.jrg")
    _write_json(dirpath / "geometry.json", _geometry_to_json(sino.geometry))
    mask = kspace.mask
    _write_json(
        dirpath / "mask.json",
        {"height": mask.height, "width": mask.width, "kept": mask.kept_indices()},
    )
    acq = asdict(cfg)
    acq["count_scale"] = sino.scale
    _write_json(dirpath / "acq.json", acq)


def load_sample(dirpath) -> Sample:
    dirpath = Path(dirpath)
    if not dirpath.is_dir():
        raise MissingInputError(f"sample directory not found: {dirpath}")
    geom = _geometry_from_json(json.loads((dirpath / "geometry.json").read_text()))
    mask_doc = json.loads((dirpath / "mask.json").read_text())
    kept = np.zeros(int(mask_doc["width"]), dtype=bool)
    kept[mask_doc["kept"]] = True
    mask = SamplingMask(int(mask_doc["height"]), int(mask_doc["width"]), kept)
    acq = json.loads((dirpath / "acq.json").read_text())
    truth = ImagePair(load_grid(dirpath / "pet.jrg"), load_grid(dirpath / "mri.jrg"))
    sino = Sinogram(geom, load_grid(dirpath / "sino.jrg"), scale=float(acq["count_scale"]))
    kspace = KSpaceData(mask, load_grid(dirpath / "kspace.jrg"))
    return Sample(truth, sino, kspace, dirpath)


def build_dataset(
    n_train: int,
    n_test: int,
    spec_template: PhantomSpec,
    geom: RadonGeometry,
    cfg: AcquisitionConfig,
    root,
    force: bool = False,
) -> dict:
    """Generate and persist a train/test dataset; returns the manifest.

    Every sample derives its own labelled stream from the template's
    stream, with split names baked into the labels so train and test
    draws can never collide.
    """
    if n_train < 0 or n_test < 0:
        raise ParameterError("sample counts must be >= 0")
    root = Path(root)
    manifest_path = root / "manifest.json"
    if manifest_path.exists() and not force:
        raise ParameterError(f"{manifest_path} exists; pass force to overwrite")
    master = spec_template.stream
    samples = []
    for split, count in (("train", n_train), ("test", n_test)):
        for idx in range(count):
            sdir = root / split / f"{idx:04d}"
            sstream = master.child(f"{split}/{idx:04d}")
            truth = make_phantom_pair(replace(spec_template, stream=sstream.child("phantom")))
            mask = make_cartesian_mask(
                spec_template.size, cfg.accel, cfg.center_fraction, sstream.child("mask")
            )
            sino = simulate_pet(truth.pet, geom, cfg, sstream.child("pet"))
            kspace = simulate_mri(truth.mri, mask, cfg, sstream.child("mri"))
            write_sample(sdir, truth, sino, kspace, cfg)
            samples.append({"split": split, "index": idx, "path": f"{split}/{idx:04d}"})
    manifest = {
        "schema": SCHEMA_VERSION,
        "seed": master.seed,
        "label": master.label,
        "image_size": spec_template.size,
        "config": asdict(cfg),
        "geometry": _geometry_to_json(geom),
        "samples": samples,
    }
    root.mkdir(parents=True, exist_ok=True)
    _write_json(manifest_path, manifest)
    return manifest


def load_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise MissingInputError(f"dataset manifest not found: {path}")
    return json.loads(path.read_text())


def sample_dirs(root, manifest: dict, split: str | None = None) -> list[Path]:
    """Paths of all sample directories, optionally restricted to a split."""
    root = Path(root)
    return [
        root / entry["path"]
        for entry in manifest["samples"]
        if split is None or entry["split"] == split
    ]
