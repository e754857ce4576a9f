"""Shared exception types.

Every error raised on purpose by this package derives from PyrocastError so
callers can catch one base class at the CLI boundary.
"""


class PyrocastError(Exception):
    """Base class for package errors."""


class DimensionError(PyrocastError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ConfigError(PyrocastError, ValueError):
    """A configuration value is out of contract."""


class FormatError(PyrocastError, ValueError):
    """A serialized file does not match its declared layout."""


class TruncatedFileError(FormatError):
    """A serialized file ends before its payload does."""


class NumericError(PyrocastError, ArithmeticError):
    """A computation produced NaN or Inf where finite values are required."""


class TrainingError(PyrocastError, RuntimeError):
    """An optimization run diverged or was otherwise unable to proceed."""
