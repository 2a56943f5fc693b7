"""Numerical laboratory for Gelfand-Shilov well-posedness of Schrodinger-type equations."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError, EvolutionError, FitError, GridError, LabError, PreconditionError,
    ResolutionError, WeightOverflowError,
)
from .grid import Field, GridSpec, Spectrum, inverse_transform, transform  # noqa: E402

__all__ = [
    "ConfigError", "EvolutionError", "FitError", "GridError", "LabError",
    "PreconditionError", "ResolutionError", "WeightOverflowError",
    "Field", "GridSpec", "Spectrum", "inverse_transform", "transform", "__version__",
]
