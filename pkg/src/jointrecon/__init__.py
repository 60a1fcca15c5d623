"""Joint PET/MRI reconstruction with a shared score-based image model.

The package simulates paired emission/anatomy phantoms, trains a small
noise-conditional score network on them, and reconstructs both
modalities together by annealed Langevin sampling against the Poisson
sinogram and undersampled k-space data terms.  Classical baselines
(MLEM, zero-filled inverse FFT, TV-regularized compressed sensing) and
an evaluation report round out the pipeline.
"""

from .errors import (
    DimensionError,
    DivergenceError,
    GeometryError,
    GridFormatError,
    JointReconError,
    MissingInputError,
    ParameterError,
    ReportError,
    SimulationError,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionError",
    "DivergenceError",
    "GeometryError",
    "GridFormatError",
    "JointReconError",
    "MissingInputError",
    "ParameterError",
    "ReportError",
    "SimulationError",
    "__version__",
]
