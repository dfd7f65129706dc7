"""
Exception hierarchy.
"""
from typing import Optional


class HMQError(Exception):
    """Base class for all package errors."""


class ArgumentError(HMQError, ValueError):
    """Invalid argument, e.g. NaN observations or out-of-range indices."""


class EstimationError(HMQError, RuntimeError):
    """A numerical procedure failed to converge or produced an inconsistent result."""


class DegenerateDensityError(HMQError, ValueError):
    """A point density cannot be normalized (identically zero)."""


class AmbiguousBoundaryError(HMQError, ValueError):
    """A companding quantile falls inside a region where the density vanishes."""


class CalibrationError(HMQError, RuntimeError):
    """The Neyman-Pearson threshold cannot be calibrated."""


class ConfigError(HMQError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, field: str, message: str, line: Optional[int] = None):
        self.field = field
        self.line = line
        self.message = message
        super().__init__(self.diagnostic())

    def diagnostic(self) -> str:
        """Line-and-field diagnostic."""
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.field}: {self.message}"
