"""Wavelet-domain super-resolution GAN in numpy with hand-written backprop."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (  # noqa: F401
    AuditError,
    ConfigError,
    DimensionError,
    FormatError,
    NonFiniteError,
    WaveSRError,
)
