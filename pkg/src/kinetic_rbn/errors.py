"""Exception types shared across the package."""

__all__ = ["NumericError", "ModelError", "StatisticalError", "WindowError",
           "CheckFailure", "ConfigError", "UnsupportedError"]


class NumericError(RuntimeError):
    """Quadrature or ODE stepping failed to meet its tolerance."""


class ModelError(ValueError):
    """A model object violates one of its structural hypotheses."""


class StatisticalError(RuntimeError):
    """Monte Carlo sample too small or too noisy for the request."""


class WindowError(RuntimeError):
    """Requested evaluation window does not cover the data."""


class CheckFailure(RuntimeError):
    """A numerical identity check exceeded its tolerance."""


class ConfigError(ValueError):
    """Configuration rejected before any computation started."""


class UnsupportedError(NotImplementedError):
    """The request is outside the regime the method is built for."""
