"""Exception types shared across the package."""


class MinSumError(Exception):
    """Base class for all package errors."""


class DimensionError(MinSumError, ValueError):
    """A vector or index does not match the program's variable count."""


class ProblemFormatError(MinSumError, ValueError):
    """A problem file (or in-memory description) is malformed."""


class DegenerateCurvatureError(MinSumError, ArithmeticError):
    """A local minimization has nonpositive total curvature.

    Raised instead of clamping, since it means the program violates the
    standing assumption that every diagonal Hessian entry stays positive.
    """


class DominanceRefused(MinSumError):
    """Scaled diagonal dominance could not be certified."""

    def __init__(self, diagnostic):
        super().__init__(diagnostic)
        self.diagnostic = diagnostic


class ScheduleError(MinSumError, ValueError):
    """A schedule or schedule script is inconsistent."""


class ConvergenceError(MinSumError, ArithmeticError):
    """An inner numerical solve hit its iteration cap."""
