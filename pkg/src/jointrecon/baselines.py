"""Classical single-modality reconstruction baselines.

MLEM maximizes the Poisson sinogram likelihood with the usual
multiplicative updates, so nonnegativity is automatic.  The MRI anchors
are zero-filled inversion (adjoint of the masked Fourier operator) and
total-variation regularized least squares solved by gradient descent
with step halving.  All three are deterministic in their inputs.

MLEM and the TV solver return (image, per-iteration objective values);
the objective trace is what the run directory persists for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, GeometryError, ParameterError
from .fourier import KSpaceData, fourier_adjoint
from .grids import as_complex_grid
from .radon import RadonGeometry, Sinogram, radon_adjoint, radon_forward
from .sampler import gaussian_dc_gradient, gaussian_objective, poisson_objective

TV_EPSILON = 1e-6


@dataclass(frozen=True)
class MlemConfig:
    iterations: int = 50
    floor: float = 1e-12

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if not self.floor > 0:
            raise ParameterError("floor must be positive")


@dataclass(frozen=True)
class TvConfig:
    iterations: int = 100
    step_size: float = 1.0
    tv_weight: float = 1e-3

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if not self.step_size > 0:
            raise ParameterError("step_size must be positive")
        if self.tv_weight < 0:
            raise ParameterError("tv_weight must be >= 0")


def mlem(f: Sinogram, geom: RadonGeometry, cfg: MlemConfig) -> tuple[np.ndarray, list[float]]:
    """Multiplicative Poisson-likelihood iterations from a uniform start.

    Returns the final activity image and the Poisson objective after
    each iteration.  The start is 1 inside the field of view (pixels
    with positive sensitivity) and 0 outside.
    """
    if np.any(f.data < 0):
        raise ParameterError("sinogram counts must be nonnegative")
    m = geom.image_size
    ones = np.ones((geom.n_detectors, geom.n_angles))
    sens = radon_adjoint(Sinogram(geom, ones))
    coords = np.arange(m) - (m - 1) / 2.0
    in_circle = coords[None, :] ** 2 + coords[:, None] ** 2 <= (m / 2.0) ** 2
    if np.any(sens[in_circle] <= 0):
        raise GeometryError("zero sensitivity inside the reconstruction circle")
    fov = sens > 0
    safe_sens = np.where(fov, sens, 1.0)
    u = fov.astype(np.float64)
    objectives = []
    for _ in range(cfg.iterations):
        proj = radon_forward(u, geom)
        ratio = f.data / np.maximum(proj.data, cfg.floor)
        back = radon_adjoint(Sinogram(geom, ratio))
        u = np.where(fov, u * back / safe_sens, 0.0)
        objectives.append(poisson_objective(u, f, geom, cfg.floor))
    return u, objectives


def zero_filled(g: KSpaceData) -> np.ndarray:
    """Adjoint reconstruction: the aliased minimum-effort MRI image."""
    return fourier_adjoint(g)


def _tv_value_grad(v: np.ndarray, eps: float) -> tuple[float, np.ndarray]:
    """Smoothed isotropic TV and its gradient (complex-valued image)."""
    gx = np.zeros_like(v)
    gx[:, :-1] = v[:, 1:] - v[:, :-1]
    gy = np.zeros_like(v)
    gy[:-1, :] = v[1:, :] - v[:-1, :]
    w = np.sqrt(np.abs(gx) ** 2 + np.abs(gy) ** 2 + eps)
    value = float(w.sum())
    px = gx / w
    py = gy / w
    grad = -(px + py)
    grad[:, 1:] += px[:, :-1]
    grad[1:, :] += py[:-1, :]
    return value, grad


def tv_cs(g: KSpaceData, cfg: TvConfig) -> tuple[np.ndarray, list[float]]:
    """Gradient descent on 0.5||mask o F v - g||^2 + tv_weight * TV(v).

    Starts from the zero-filled image; the step halves whenever a trial
    update would increase the objective, and accepted objectives are
    therefore non-increasing.  Returns (image, objective history).
    """
    v = as_complex_grid(zero_filled(g))

    def objective_grad(v):
        dc = gaussian_objective(v, g)
        dc_grad = gaussian_dc_gradient(v, g)
        tv_val, tv_grad = _tv_value_grad(v, TV_EPSILON)
        return dc + cfg.tv_weight * tv_val, dc_grad + cfg.tv_weight * tv_grad

    obj, grad = objective_grad(v)
    if not np.isfinite(obj):
        raise DivergenceError("non-finite objective at start")
    step = cfg.step_size
    history = [obj]
    for _ in range(cfg.iterations):
        while True:
            trial = v - step * grad
            trial_obj, trial_grad = objective_grad(trial)
            if not np.isfinite(trial_obj):
                raise DivergenceError("non-finite objective during descent")
            if trial_obj <= obj or step < 1e-12:
                break
            step *= 0.5
        v, obj, grad = trial, trial_obj, trial_grad
        history.append(obj)
    return v, history
