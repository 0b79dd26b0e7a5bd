"""Exception types shared across the package."""


class DptError(Exception):
    """Base class for all package errors."""


class DimensionError(DptError, ValueError):
    """Tensor extents are incompatible with the requested operation."""


class ConfigurationError(DptError, ValueError):
    """A configuration value or geometry is not admissible."""


class FormatError(DptError, ValueError):
    """A file on disk does not follow the expected binary layout."""


class UsageError(DptError, RuntimeError):
    """An API was called in a state where it is not allowed."""


class NumericError(DptError, FloatingPointError):
    """A forward result or loss became NaN or infinite."""
