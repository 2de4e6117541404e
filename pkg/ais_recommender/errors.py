"""
Exception types raised by the recommender engine
"""

from typing import Any, Optional


class AisRecommenderError(Exception):
    """Base class for every error raised by this package"""


class DataError(AisRecommenderError, ValueError):
    """Invalid vote data or an input the data cannot satisfy"""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientOverlapError(DataError):
    """Kendall's tau needs at least two overlapping films"""


class PoolFullError(AisRecommenderError, RuntimeError):
    """An antibody was offered to a pool that is already at capacity"""


class DifferentiationCapError(AisRecommenderError, RuntimeError):
    """
    Differentiation stopped before any antibody saturated

    The partially differentiated state is kept on the exception so callers
    can still inspect or use the concentrations it reached.
    """

    def __init__(self, message: str, state: Any, iterations: int) -> None:
        super().__init__(message)
        self.state = state
        self.iterations = iterations


class StatisticsError(AisRecommenderError, ValueError):
    """A statistical test cannot be evaluated on the given sample"""
