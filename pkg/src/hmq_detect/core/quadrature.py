"""
Quadrature on tabulated grids.
"""
import logging
from typing import Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson, trapezoid

from .errors import ArgumentError

logger = logging.getLogger(__name__)

REFINEMENT_STRIDES = (4, 2, 1)


def uniform_grid(support: Tuple[float, float], size: int) -> np.ndarray:
    """``size`` equally spaced points spanning ``support``, both ends included."""
    lo, hi = support
    if not lo < hi or size < 3:
        raise ArgumentError(f"invalid grid: support={support}, size={size}")
    return np.linspace(lo, hi, size)


def simpson_integral(values: np.ndarray, grid: np.ndarray) -> float:
    """Composite Simpson rule."""
    return float(simpson(values, x=grid))


def trapezoid_integral(values: np.ndarray, grid: np.ndarray) -> float:
    return float(trapezoid(values, grid))


def cumulative_integral(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Running trapezoid integral, starting at 0."""
    return cumulative_trapezoid(values, grid, initial=0.0)


def nested_simpson_sums(integrand: np.ndarray, grid: np.ndarray) -> Tuple[float, ...]:
    """Simpson sums over three nested refinements of ``grid`` (coarsest first).

    Non-finite integrand values are punctured, i.e. replaced by zero.
    """
    if (len(grid) - 1) % REFINEMENT_STRIDES[0] != 0:
        raise ArgumentError(f"grid of {len(grid)} points cannot be refined {REFINEMENT_STRIDES}")
    punctured = np.where(np.isfinite(integrand), integrand, 0.0)
    return tuple(
        simpson_integral(punctured[::stride], grid[::stride]) for stride in REFINEMENT_STRIDES
    )


def grows_under_refinement(sums: Tuple[float, ...], growth: float) -> bool:
    """True when every refinement increases the sum by more than ``growth`` (relative)."""
    return all(
        coarse > 0 and (fine - coarse) / coarse > growth for coarse, fine in zip(sums, sums[1:])
    )
