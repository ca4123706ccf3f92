"""Exception types shared across the package."""


class SymNodeError(Exception):
    """Base class for all package errors."""


class NumericalError(SymNodeError):
    """A computation produced non-finite values."""


class IntegrationError(NumericalError):
    """An ODE integration failed (non-finite state, step overflow or underflow)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class OutOfRangeError(SymNodeError):
    """Requested time lies outside a trajectory's time hull."""


class DomainError(SymNodeError, ValueError):
    """Input lies outside the domain where a formula is defined."""


class SingularityError(DomainError):
    """A symmetry formula hits a singular point (e.g. cos(phi) = 0)."""


class ConfigError(SymNodeError, ValueError):
    """Invalid configuration value or key."""


class DatasetError(SymNodeError, ValueError):
    """A dataset file does not match the expected schema."""


class DegenerateRegularizerError(SymNodeError):
    """Every evaluation point of an active regularizer was skipped."""
