"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the documented domain of a function."""


class ConvergenceError(ArithmeticError):
    """A numerical procedure stopped before reaching its tolerance.

    The best available estimate is kept so callers can decide whether it is
    good enough.
    """

    def __init__(self, message, estimate=float("nan"), error_estimate=float("inf")):
        super().__init__(message)
        self.estimate = estimate
        self.error_estimate = error_estimate


class ConfigError(ValueError):
    """An experiment or command configuration is invalid or inconsistent."""
