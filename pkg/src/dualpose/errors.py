"""Exception types shared across the package."""


class DualPoseError(Exception):
    """Base class for all package-specific errors."""


class FrameMismatchError(DualPoseError):
    """A pose was supplied in the wrong coordinate frame."""


class BehindCameraError(DualPoseError):
    """A 3D point has non-positive depth and cannot be projected."""


class OutOfGridError(DualPoseError):
    """A sample location falls outside the heatmap grid."""


class InsufficientHistoryError(DualPoseError):
    """Not enough past frames for the requested polynomial order."""


class MisalignedFramesError(DualPoseError):
    """Observation / prediction frame indices do not line up."""


class DegenerateGeometryError(DualPoseError):
    """Point configuration is too degenerate for the requested alignment."""


class ScorerContractError(DualPoseError):
    """A plausibility scorer returned a value outside the open interval (0, 1)."""


class DomainError(DualPoseError):
    """A numeric argument is outside the mathematical domain of the operation."""


class NumericFailureError(DualPoseError):
    """A numeric routine produced non-finite values; carries diagnostic context."""


class SchemaError(DualPoseError):
    """A file or record violates the expected schema.

    The message carries the offending line number and/or field path.
    """
