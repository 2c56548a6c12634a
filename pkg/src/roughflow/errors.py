"""Exception types shared across the package."""


class RoughFlowError(Exception):
    """Base class for all package errors."""


class GridError(RoughFlowError, ValueError):
    """Invalid time grid or mismatched grids."""


class QuadratureError(RoughFlowError):
    """Second-level quadrature failed to converge."""


class FactorizationError(RoughFlowError):
    """Covariance factorization failed even after maximal jitter."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NumericalAbort(RoughFlowError):
    """A solver hit blow-up, NaN, or a stability bound and stopped.

    ``last_time`` is the last time at which the state was still valid.
    """

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class CFLError(NumericalAbort):
    """Time step too large for the requested grid."""

    def __init__(self, message, last_time=None, suggested_steps=None):
        super().__init__(message, last_time)
        self.suggested_steps = suggested_steps


class ConfigError(RoughFlowError, ValueError):
    """Invalid experiment configuration."""
