"""Reverse-diffusion reconstruction with joint score and data terms.

The sampler walks a geometric noise ladder downward.  At each level it
runs a few Langevin updates whose drift combines three pulls: the prior
score at the current noise level, the Poisson sinogram-consistency
gradient for PET, and the Gaussian k-space-consistency gradient for MRI.
After each level the PET channel is clamped nonnegative.

Two update modes exist.  The default mode is annealed Langevin with
per-level step alpha_i = step_scale * (sigma_i / sigma_max)^2, drift
sigma_i^2 * score - dc_weight * dc_gradients, and injected noise of
standard deviation sqrt(2 * alpha_i).  The literal mode performs one
unweighted composition per level,

    x <- x - score - pet_dc - mri_dc + z,

every term with unit coefficient; it exists as a fidelity reference, not
as a practical sampler.

Measured sinograms carry a count scale; the reconstruction drivers
divide it out so the sampler always works in activity units, and the
effective dose weighting lives in ``dc_weight_pet``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, DivergenceError, ParameterError
from .fourier import KSpaceData, fourier_adjoint, fourier_forward
from .grids import ImagePair, channels_to_pair, pair_to_channels
from .radon import RadonGeometry, Sinogram, radon_adjoint, radon_forward
from .rng import RandomStream
from .schedule import NoiseSchedule
from .schedule import forward_diffuse as forward_diffuse  # re-export
from .schedule import sigma_at as sigma_at  # re-export

PET = "pet"
MRI = "mri"


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of the reverse-diffusion loop.

    ``dc_weight_pet`` and ``dc_weight_mri`` absorb the likelihood noise
    scale and the prior-strength constant; they multiply the respective
    data-consistency gradients in default mode and are ignored in
    literal mode.
    """

    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    steps_per_level: int = 3
    step_scale: float = 0.2
    dc_weight_pet: float = 1.0
    dc_weight_mri: float = 1.0
    literal_mode: bool = False
    pet_floor: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.steps_per_level < 1:
            raise ParameterError("steps_per_level must be >= 1")
        if not self.step_scale > 0:
            raise ParameterError("step_scale must be positive")
        if self.dc_weight_pet < 0 or self.dc_weight_mri < 0:
            raise ParameterError("data-consistency weights must be >= 0")
        if not self.pet_floor > 0:
            raise ParameterError("pet_floor must be positive")


@dataclass
class TraceRow:
    """Diagnostics recorded after each completed level."""

    level: int
    sigma: float
    poisson_objective: float
    gaussian_objective: float
    u_norm: float
    v_norm: float


@dataclass
class SamplerState:
    """Iterate, ladder position, and accumulated trace."""

    iterate: ImagePair
    level: int
    trace: list[TraceRow] = field(default_factory=list)


class ZeroScore:
    """Score source that always returns zero (prior-free sampling)."""

    def __init__(self, channels: int):
        self.channels = channels

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return np.zeros_like(x)


class ScaledScoreSource:
    """Score of the same image law expressed in rescaled units.

    If ``base`` scores images in their native units, this source scores
    y = factor * x: score_y(y, sigma) = base(y / factor, sigma / factor)
    / factor.  The averaged drivers use it to run the sampler in units
    where the data sits far above the ladder floor.
    """

    def __init__(self, base, factor: float):
        if not factor > 0:
            raise ParameterError("scale factor must be positive")
        self.base = base
        self.factor = float(factor)
        self.channels = getattr(base, "channels", None)

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return self.base(x / self.factor, sigma / self.factor) / self.factor


def poisson_dc_gradient(u: np.ndarray, f: Sinogram, geom: RadonGeometry, floor: float = 1e-8) -> np.ndarray:
    """Gradient of sum((Au)_i - f_i log (Au)_i) with a floored ratio.

    Returns A*(1 - f / max(Au, floor)).  The floor keeps the division
    finite when diffusion intermediates drive projections toward or
    below zero.
    """
    proj = radon_forward(u, geom)
    ratio = f.data / np.maximum(proj.data, floor)
    return radon_adjoint(Sinogram(geom, 1.0 - ratio))


def gaussian_dc_gradient(v: np.ndarray, g: KSpaceData) -> np.ndarray:
    """Gradient F*(mask o F v - g) of half the squared k-space residual."""
    resid = fourier_forward(v, g.mask).data - g.data
    return fourier_adjoint(KSpaceData(g.mask, resid))


def poisson_objective(u: np.ndarray, f: Sinogram, geom: RadonGeometry, floor: float = 1e-8) -> float:
    proj = radon_forward(u, geom).data
    return float(np.sum(proj - f.data * np.log(np.maximum(proj, floor))))


def gaussian_objective(v: np.ndarray, g: KSpaceData) -> float:
    resid = fourier_forward(v, g.mask).data - g.data
    return 0.5 * float(np.sum(np.abs(resid) ** 2))


def _require_channels(score_source, expected: int) -> None:
    have = getattr(score_source, "channels", None)
    if have != expected:
        raise DimensionError(
            f"score source provides {have} channels, reconstruction needs {expected}"
        )


def _run_level(
    x: np.ndarray,
    sigma: float,
    score_fn,
    dc_terms,
    cfg: SamplerConfig,
    stream: RandomStream,
    clamp_channel: int | None,
    level: int,
) -> np.ndarray:
    """Advance one ladder level; returns the (possibly clamped) iterate."""
    if cfg.literal_mode:
        drift = -score_fn(x, sigma)
        for sl, _weight, fn in dc_terms:
            drift[sl] -= fn(x)
        z = stream.normal(x.size).reshape(x.shape)
        x = x + drift + z
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite iterate at level {level}")
    else:
        alpha = cfg.step_scale * (sigma / cfg.schedule.sigma_max) ** 2
        noise_std = math.sqrt(2.0 * alpha)
        for _ in range(cfg.steps_per_level):
            drift = sigma**2 * score_fn(x, sigma)
            for sl, weight, fn in dc_terms:
                if weight > 0:
                    drift[sl] -= weight * fn(x)
            z = stream.normal(x.size).reshape(x.shape)
            x = x + alpha * drift + noise_std * z
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite iterate at level {level}")
    if clamp_channel is not None:
        x[clamp_channel] = np.maximum(x[clamp_channel], 0.0)
    return x


def _joint_dc_terms(f: Sinogram, g: KSpaceData, geom: RadonGeometry, cfg: SamplerConfig):
    def dc_pet(x):
        return poisson_dc_gradient(x[0], f, geom, cfg.pet_floor)[None]

    def dc_mri(x):
        grad = gaussian_dc_gradient(x[1] + 1j * x[2], g)
        return np.stack([grad.real, grad.imag])

    return [
        (slice(0, 1), cfg.dc_weight_pet, dc_pet),
        (slice(1, 3), cfg.dc_weight_mri, dc_mri),
    ]


def _activity_scale(f: Sinogram) -> Sinogram:
    """Sinogram in activity units (count scale divided out)."""
    if f.scale == 1.0:
        return f
    return Sinogram(f.geometry, f.data / f.scale)


def reverse_step(
    state: SamplerState,
    f: Sinogram,
    g: KSpaceData,
    score_source,
    cfg: SamplerConfig,
    stream: RandomStream,
) -> SamplerState:
    """One ladder descent: level i+1 state in, level i state out.

    ``f`` is expected in activity units (scale already divided out);
    :func:`reconstruct_joint` does this before looping.
    """
    if state.level < 1:
        raise ParameterError("reverse_step needs a state at level >= 1")
    _require_channels(score_source, 3)
    geom = f.geometry
    dst = state.level - 1
    sigma = cfg.schedule.sigma(dst)
    x = pair_to_channels(state.iterate)
    x = _run_level(x, sigma, score_source, _joint_dc_terms(f, g, geom, cfg), cfg, stream, 0, dst)
    pair = channels_to_pair(x)
    row = TraceRow(
        level=dst,
        sigma=sigma,
        poisson_objective=poisson_objective(pair.pet, f, geom, cfg.pet_floor),
        gaussian_objective=gaussian_objective(pair.mri, g),
        u_norm=float(np.linalg.norm(pair.pet)),
        v_norm=float(np.linalg.norm(pair.mri)),
    )
    return SamplerState(pair, dst, state.trace + [row])


def reconstruct_joint(
    f: Sinogram,
    g: KSpaceData,
    geom: RadonGeometry,
    score_source,
    cfg: SamplerConfig,
) -> tuple[ImagePair, list[TraceRow]]:
    """Full reverse-diffusion joint reconstruction from (f, g)."""
    m = geom.image_size
    if g.mask.shape != (m, m):
        raise DimensionError(f"mask shape {g.mask.shape} != image shape ({m}, {m})")
    if f.geometry != geom:
        raise DimensionError("sinogram geometry differs from requested geometry")
    _require_channels(score_source, 3)
    f_act = _activity_scale(f)
    stream = RandomStream(cfg.seed, "sampler")
    init = stream.child("init")
    smax = cfg.schedule.sigma_max
    u0 = np.abs(smax * init.normal(m * m).reshape(m, m))
    zv = init.normal(2 * m * m).reshape(2, m, m)
    v0 = smax * (zv[0] + 1j * zv[1])
    state = SamplerState(ImagePair(u0, v0), cfg.schedule.n_steps)
    chain = stream.child("chain")
    while state.level > 0:
        state = reverse_step(state, f_act, g, score_source, cfg, chain)
    return state.iterate, state.trace


def reconstruct_single(
    modality: str,
    data,
    geom_or_mask,
    score_source,
    cfg: SamplerConfig,
) -> tuple[np.ndarray, list[TraceRow]]:
    """Single-modality reconstruction with the same annealing machinery.

    The other modality's data term simply does not exist here; the score
    source must be a marginal (1-channel PET or 2-channel MRI) source.
    Returns the reconstructed grid: real for PET, complex for MRI.
    """
    stream = RandomStream(cfg.seed, "sampler")
    init = stream.child("init")
    smax = cfg.schedule.sigma_max
    if modality == PET:
        _require_channels(score_source, 1)
        f: Sinogram = _activity_scale(data)
        geom: RadonGeometry = geom_or_mask
        if f.geometry != geom:
            raise DimensionError("sinogram geometry differs from requested geometry")
        m = geom.image_size
        x = np.abs(smax * init.normal(m * m)).reshape(1, m, m)

        def dc(x):
            return poisson_dc_gradient(x[0], f, geom, cfg.pet_floor)[None]

        dc_terms = [(slice(0, 1), cfg.dc_weight_pet, dc)]
        clamp = 0

        def diagnostics(x):
            return (
                poisson_objective(x[0], f, geom, cfg.pet_floor),
                float("nan"),
                float(np.linalg.norm(x[0])),
                float("nan"),
            )

    elif modality == MRI:
        _require_channels(score_source, 2)
        g: KSpaceData = data
        h, w = g.mask.shape
        z = init.normal(2 * h * w).reshape(2, h, w)
        x = smax * z

        def dc(x):
            grad = gaussian_dc_gradient(x[0] + 1j * x[1], g)
            return np.stack([grad.real, grad.imag])

        dc_terms = [(slice(0, 2), cfg.dc_weight_mri, dc)]
        clamp = None

        def diagnostics(x):
            return (
                float("nan"),
                gaussian_objective(x[0] + 1j * x[1], g),
                float("nan"),
                float(np.linalg.norm(x[0] + 1j * x[1])),
            )

    else:
        raise ParameterError(f"unknown modality {modality!r}")

    chain = stream.child("chain")
    rows: list[TraceRow] = []
    for src in range(cfg.schedule.n_steps, 0, -1):
        dst = src - 1
        sigma = cfg.schedule.sigma(dst)
        x = _run_level(x, sigma, score_source, dc_terms, cfg, chain, clamp, dst)
        rows.append(TraceRow(dst, sigma, *diagnostics(x)))
    out = x[0] if modality == PET else x[0] + 1j * x[1]
    return out, rows


def _check_averaging(unit_scale: float, averages: int) -> None:
    if not unit_scale > 0:
        raise ParameterError("unit_scale must be positive")
    if averages < 1:
        raise ParameterError("averages must be >= 1")


def averaged_joint(
    f: Sinogram,
    g: KSpaceData,
    geom: RadonGeometry,
    score_source,
    cfg: SamplerConfig,
    unit_scale: float = 1.0,
    averages: int = 1,
) -> tuple[ImagePair, list[TraceRow]]:
    """Mean of seed-offset joint reconstructions, an estimate of the
    posterior mean rather than one posterior sample.

    The update noise amplitude sqrt(2 alpha_i) is fixed by the level
    ratio alone, so the residual noise in the final iterate sits at the
    absolute scale of the ladder floor.  ``unit_scale`` multiplies the
    measurements (and adapts the score source to match) so that floor
    lands at 1/unit_scale of the data scale; outputs are divided back.
    Draw k runs with seed ``cfg.seed + k``.  Returns the averaged pair
    and the first draw's trace, whose diagnostics are in scaled units.
    """
    _check_averaging(unit_scale, averages)
    f_act = _activity_scale(f)
    if unit_scale != 1.0:
        f_run = Sinogram(f_act.geometry, f_act.data * unit_scale)
        g_run = KSpaceData(g.mask, g.data * unit_scale)
        source = ScaledScoreSource(score_source, unit_scale)
    else:
        f_run, g_run, source = f_act, g, score_source
    pets, mris = [], []
    trace: list[TraceRow] = []
    for k in range(averages):
        pair, rows = reconstruct_joint(f_run, g_run, geom, source, replace(cfg, seed=cfg.seed + k))
        if k == 0:
            trace = rows
        pets.append(pair.pet / unit_scale)
        mris.append(pair.mri / unit_scale)
    return ImagePair(np.mean(pets, axis=0), np.mean(mris, axis=0)), trace


def averaged_single(
    modality: str,
    data,
    geom_or_mask,
    score_source,
    cfg: SamplerConfig,
    unit_scale: float = 1.0,
    averages: int = 1,
) -> tuple[np.ndarray, list[TraceRow]]:
    """Single-modality counterpart of :func:`averaged_joint`."""
    _check_averaging(unit_scale, averages)
    if modality == PET:
        act = _activity_scale(data)
        run_data = act if unit_scale == 1.0 else Sinogram(act.geometry, act.data * unit_scale)
    elif modality == MRI:
        run_data = data if unit_scale == 1.0 else KSpaceData(data.mask, data.data * unit_scale)
    else:
        raise ParameterError(f"unknown modality {modality!r}")
    source = score_source if unit_scale == 1.0 else ScaledScoreSource(score_source, unit_scale)
    outs = []
    trace: list[TraceRow] = []
    for k in range(averages):
        out, rows = reconstruct_single(
            modality, run_data, geom_or_mask, source, replace(cfg, seed=cfg.seed + k)
        )
        if k == 0:
            trace = rows
        outs.append(out / unit_scale)
    return np.mean(outs, axis=0), trace


def save_trace(rows: list[TraceRow], path) -> None:
    """Write a reconstruction trace as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["level", "sigma", "poisson_objective", "gaussian_objective", "u_norm", "v_norm"]
        )
        for r in rows:
            writer.writerow(
                [r.level, r.sigma, r.poisson_objective, r.gaussian_objective, r.u_norm, r.v_norm]
            )
