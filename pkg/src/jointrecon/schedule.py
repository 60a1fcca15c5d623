"""Geometric noise-level ladder and the forward noising process.

Levels run from 0 (cleanest, ``sigma_min``) to ``n_steps`` (noisiest,
``sigma_max``), spaced geometrically so consecutive ratios are constant.
Forward noising at level i adds independent Gaussian noise of standard
deviation sigma_i to every channel; the reverse-time sampler walks the
ladder downward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grids import ImagePair, channels_to_pair, pair_to_channels
from .rng import RandomStream


@dataclass(frozen=True)
class NoiseSchedule:
    """Geometric ladder of noise standard deviations."""

    sigma_min: float = 0.01
    sigma_max: float = 10.0
    n_steps: int = 100

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ParameterError("need 0 < sigma_min < sigma_max")
        if self.n_steps < 1:
            raise ParameterError("n_steps must be >= 1")

    def sigma(self, level: int) -> float:
        """Noise level at ladder position ``level`` in [0, n_steps]."""
        if not 0 <= level <= self.n_steps:
            raise ParameterError(f"level {level} outside [0, {self.n_steps}]")
        ratio = self.sigma_max / self.sigma_min
        return self.sigma_min * ratio ** (level / self.n_steps)

    def sigmas(self) -> np.ndarray:
        """All n_steps + 1 values, ascending from sigma_min to sigma_max."""
        return np.array([self.sigma(i) for i in range(self.n_steps + 1)])


def sigma_at(level: int, schedule: NoiseSchedule) -> float:
    """Free-function form of :meth:`NoiseSchedule.sigma`."""
    return schedule.sigma(level)


def forward_diffuse(pair: ImagePair, level: int, schedule: NoiseSchedule, stream: RandomStream) -> ImagePair:
    """Add level-``level`` Gaussian noise to every channel of ``pair``.

    The PET channel and both quadratures of the MRI channel receive
    independent draws of the same standard deviation; the result may go
    negative, which is expected for diffusion intermediates.
    """
    sigma = schedule.sigma(level)
    x = pair_to_channels(pair)
    noise = stream.normal(x.size).reshape(x.shape)
    return channels_to_pair(x + sigma * noise)
