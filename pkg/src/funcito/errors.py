"""Exception types shared across the package."""


class DomainError(ValueError):
    """A time, step or path lies outside the set an operation is defined on."""


class DegenerateIncrementError(DomainError):
    """The path increment used as a denominator vanishes."""


class EvaluationError(ArithmeticError):
    """A functional returned a non-finite value."""


class ConfigurationError(ValueError):
    """A required oracle or configuration entry is missing or malformed."""
