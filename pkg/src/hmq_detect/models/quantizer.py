"""
Quantizer and point-density data structures.
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
from scipy.integrate import trapezoid

from ..core.errors import ArgumentError


@dataclass(frozen=True, eq=False)
class PointDensity:
    """Model point density tabulated on a grid spanning the quantization support.

    ``zeros`` lists points where the density is known to vanish; they need not
    be grid nodes.
    """
    grid: np.ndarray
    values: np.ndarray
    zeros: Tuple[float, ...] = ()

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) < 3:
            raise ArgumentError("grid and values must be 1-D arrays of equal length >= 3")
        if np.any(np.diff(grid) <= 0):
            raise ArgumentError("density grid must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ArgumentError("density values must be finite and nonnegative")
        zeros = tuple(float(z) for z in self.zeros)
        if not all(math.isfinite(z) for z in zeros):
            raise ArgumentError("density zeros must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "zeros", zeros)

    @property
    def support(self) -> Tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def integral(self) -> float:
        """Trapezoid integral over the grid."""
        return float(trapezoid(self.values, self.grid))

    def __call__(self, y) -> np.ndarray:
        """Linear interpolation of the tabulated density."""
        return np.interp(y, self.grid, self.values, left=0.0, right=0.0)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PointDensity":
        """Create PointDensity from dictionary data."""
        return cls(grid=np.asarray(data["grid"], dtype=float),
                   values=np.asarray(data["values"], dtype=float),
                   zeros=tuple(data.get("zeros", ())))

    def to_dict(self) -> Dict[str, Any]:
        """Convert PointDensity to dictionary."""
        return {"grid": self.grid.tolist(), "values": self.values.tolist(),
                "zeros": list(self.zeros)}


@dataclass(frozen=True, eq=False)
class Quantizer:
    """N-cell scalar quantizer.

    Cells are right-open except the last; observations outside the support
    are clamped into the edge cells.
    """
    boundaries: np.ndarray
    reps: np.ndarray

    def __post_init__(self):
        boundaries = np.asarray(self.boundaries, dtype=float)
        reps = np.asarray(self.reps, dtype=float)
        if boundaries.ndim != 1 or len(boundaries) < 2:
            raise ArgumentError("a quantizer needs at least two boundaries")
        if len(reps) != len(boundaries) - 1:
            raise ArgumentError("need exactly one representative per cell")
        if np.any(np.diff(boundaries) <= 0):
            raise ArgumentError("quantizer boundaries must be strictly increasing")
        if np.any(reps <= boundaries[:-1]) or np.any(reps >= boundaries[1:]):
            raise ArgumentError("each representative must lie strictly inside its cell")
        object.__setattr__(self, "boundaries", boundaries)
        object.__setattr__(self, "reps", reps)

    @property
    def n_cells(self) -> int:
        return len(self.reps)

    @property
    def support(self) -> Tuple[float, float]:
        return float(self.boundaries[0]), float(self.boundaries[-1])

    @property
    def lengths(self) -> np.ndarray:
        """Cell lengths l_{N,j}."""
        return np.diff(self.boundaries)

    @property
    def specific_density(self) -> np.ndarray:
        """Specific point densities 1 / (N l_{N,j})."""
        return 1.0 / (self.n_cells * self.lengths)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Quantizer":
        """Create Quantizer from dictionary data."""
        quantizer = cls(boundaries=np.asarray(data["boundaries"], dtype=float),
                        reps=np.asarray(data["reps"], dtype=float))
        support = data.get("support")
        if support is not None and not np.allclose(support, quantizer.support):
            raise ArgumentError(f"support {support} disagrees with boundaries")
        return quantizer

    def to_dict(self) -> Dict[str, Any]:
        """Convert Quantizer to dictionary."""
        return {
            "support": list(self.support),
            "boundaries": self.boundaries.tolist(),
            "reps": self.reps.tolist(),
        }
