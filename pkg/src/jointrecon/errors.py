"""Exception types shared across the package.

The CLI maps these onto its stable exit codes: parameter/usage problems
exit 2, missing inputs exit 3, numerical divergence exit 4.
"""


class JointReconError(Exception):
    """Base class for all package errors."""


class DimensionError(JointReconError, ValueError):
    """Operands have incompatible shapes or sizes."""


class ParameterError(JointReconError, ValueError):
    """A configuration value violates its documented constraint."""


class GridFormatError(JointReconError, ValueError):
    """A grid file is malformed: bad magic, header, or byte count."""


class GeometryError(JointReconError, ValueError):
    """An acquisition geometry cannot support the requested operation."""


class SimulationError(JointReconError, RuntimeError):
    """Measurement simulation cannot proceed (e.g. zero forward mass)."""


class DivergenceError(JointReconError, RuntimeError):
    """An iterative solve produced non-finite values."""


class MissingInputError(JointReconError, FileNotFoundError):
    """A required input file or directory does not exist."""


class ReportError(JointReconError, ValueError):
    """A report request is inconsistent (missing ground truth, empty run)."""
