"""Exception hierarchy shared by every loopopt module."""


class LoopOptError(Exception):
    """Base class for all errors raised by this package."""


class ValidationFailure(LoopOptError, ValueError):
    """Input does not satisfy a documented precondition."""


class GridMismatchError(ValidationFailure):
    """A tangent field lives on a different grid than its base curve."""


class NotImmersionError(LoopOptError):
    """A curve has (numerically) vanishing speed where an immersion is required."""

    def __init__(self, message: str = "not an immersion"):
        super().__init__(message)


class SRVTClosureError(LoopOptError):
    """The integrand |q|q of an SRVT inversion has nonzero mean."""

    def __init__(self, message: str = "SRVT image not closed"):
        super().__init__(message)


class MetricError(LoopOptError):
    """A Gram matrix or Riesz system is not symmetric positive definite."""


class AdmissibilityError(LoopOptError):
    """An iterate could not be kept inside the admissible open set."""

    def __init__(self, message: str = "left admissible set"):
        super().__init__(message)


class NonFiniteError(LoopOptError):
    """An objective value or gradient evaluated to nan or inf."""


class ArtifactError(LoopOptError):
    """Writing or reading an artifact file failed."""
