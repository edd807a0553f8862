"""Exception taxonomy.

Two broad families map onto CLI exit codes: ValidationError (bad inputs,
exit 3) and ComputationError (a solver or numeric procedure failed on
otherwise valid inputs, exit 4).  I/O problems propagate as OSError and
exit 5.  StageError wraps a failure inside a pipeline scenario and names
the stage that produced it.
"""


class ValidationError(ValueError):
    """Inputs or configuration violate a documented precondition."""


class ComputationError(RuntimeError):
    """A numeric procedure failed to produce a valid result."""


class InvalidGeometryError(ValidationError):
    """Waveguide geometry is non-physical (non-positive sizes, n_core <= n_clad)."""


class SamplingError(ValidationError):
    """Grid or trace sampling is too coarse for the requested operation."""


class GridOverflowError(ValidationError):
    """A field placed on a grid would lose more than the allowed power off-edge."""


class TargetOutsideGridError(ValidationError):
    """An integration target (with its disc) does not fit on the field grid."""


class InsufficientOverlapError(ValidationError):
    """Consecutive scans do not share the required overlap range."""


class WindowTooSmallError(ValidationError):
    """The requested averaging window does not fit strictly between the peaks."""


class RegionOverlapError(ValidationError):
    """A background region intrudes on the exclusion zone around a peak."""


class UnderdeterminedError(ValidationError):
    """The chosen known parameters do not pin down the remaining ones."""


class InconsistentKnownsError(ValidationError):
    """Supplied parameter values violate a constraint among themselves."""


class OutOfRangeError(ValidationError):
    """A solved or supplied parameter fell outside its physical range."""


class GridTooCoarseError(ComputationError):
    """Doubling the grid resolution moved the result more than tolerated."""


class ModeNotGuidedError(ComputationError):
    """No guided mode exists for the requested geometry and polarization."""


class CutoffNotFoundError(ComputationError):
    """No single-mode cutoff width inside the search interval."""


class ConvergenceError(ComputationError):
    """An iterative solver did not reach its residual tolerance."""


class PeakNotFoundError(ComputationError):
    """No local maximum near the hinted position."""


class NoPeakInOverlapError(ComputationError):
    """A scan overlap region contains no detectable peak to normalize on."""


class StageError(ComputationError):
    """Failure inside a pipeline scenario, tagged with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
