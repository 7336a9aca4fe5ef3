"""Multicontinuum splitting schemes for 2D high-contrast wave propagation."""

from .errors import (ConfigurationError, DegeneracyError, DomainError, McwaveError,
                     SingularSystemError)
from .grid import build_meshes, default_layers, oversample

__all__ = [
    "ConfigurationError", "DegeneracyError", "DomainError", "McwaveError",
    "SingularSystemError", "build_meshes", "default_layers", "oversample",
]

__version__ = "0.1.0"
