"""Exception types shared across the package."""


class WaveSRError(Exception):
    """Base class for all package errors."""


class DimensionError(WaveSRError, ValueError):
    """Shapes or extents do not satisfy an operation's contract."""


class ConfigError(WaveSRError, ValueError):
    """Invalid configuration value or key."""


class NonFiniteError(WaveSRError, FloatingPointError):
    """A NaN or Inf appeared in the output of an operation."""


class FormatError(WaveSRError, ValueError):
    """A file does not follow the expected binary or image format."""


class AuditError(WaveSRError, AssertionError):
    """A debug-mode bookkeeping check failed during training."""
