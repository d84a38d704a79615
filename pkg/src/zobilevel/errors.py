"""Exception hierarchy shared by all modules."""


class ZoBilevelError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ZoBilevelError):
    """Invalid or inconsistent configuration (dimensions, regimes, configs)."""


class InvalidParameterError(ZoBilevelError):
    """A parameter violates an operation's precondition (e.g. zero smoothing radius)."""


class NumericError(ZoBilevelError):
    """A computation produced non-finite values."""


class SingularMatrixError(ZoBilevelError):
    """A linear solve hit a numerically singular matrix."""


class DivergenceError(ZoBilevelError):
    """Iterates blew past the divergence guard (step size too large)."""
