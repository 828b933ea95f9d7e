"""
Error types

All errors raised by the laboratory derive from LabError so callers can catch
the whole family at once.
"""

from typing import Optional, Sequence


class LabError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(LabError, ValueError):
    """Invalid counts, parameters, grids or mismatched components."""


class DomainError(LabError, ValueError):
    """Geometric input outside the admissible set (off-boundary point, non-unit velocity)."""


class SingularChartError(DomainError):
    """A curvilinear denominator R_i - eps*eta vanished or changed sign."""


class IterationLimitError(LabError, RuntimeError):
    """
    An iterative solve did not converge.

    Attributes:
        residual_history: successive-difference norms recorded per iteration
    """

    def __init__(self, message: str, residual_history: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class StudyError(LabError, RuntimeError):
    """
    A study stage failed.

    Attributes:
        stage: name of the stage that raised (e.g. "transport", "milne")
    """

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
