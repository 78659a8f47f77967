"""Exception types raised by the package."""


class ConfigurationError(ValueError):
    """Invalid tunables, dimensions or data layout."""


class ModelEvaluationError(ArithmeticError):
    """A model returned a non-finite log-density."""


class InvariantViolation(RuntimeError):
    """An internal consistency check failed."""
