"""Exception types shared across the package."""


class HilbertDiffuseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HilbertDiffuseError, ValueError):
    """Inconsistent or malformed configuration (dimensions, presets, keys)."""


class PreconditionError(HilbertDiffuseError, ValueError):
    """An operation was called outside the domain where its guarantee holds."""


class GridError(HilbertDiffuseError, ValueError):
    """A requested time is not a point of the simulation grid."""


class IntegrationError(HilbertDiffuseError, FloatingPointError):
    """A trajectory left the finite range during integration."""


class StabilityError(HilbertDiffuseError, ValueError):
    """An explicit scheme was asked to step beyond its stability limit."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt
