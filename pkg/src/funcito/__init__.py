"""Numerical functional Itô calculus on càdlàg paths."""

from .errors import ConfigurationError, DegenerateIncrementError, DomainError, EvaluationError
from .pathspace import CadlagPath, TimeGrid, align, d_infty

__version__ = "0.1.0"

__all__ = [
    "CadlagPath",
    "TimeGrid",
    "align",
    "d_infty",
    "DomainError",
    "DegenerateIncrementError",
    "EvaluationError",
    "ConfigurationError",
]
