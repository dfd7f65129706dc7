"""
Scalar quantizers built from model point densities by companding.
"""
import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.stats import norm

from ..config.settings import QUADRATURE_CONFIG
from ..models.model import ModelParams
from ..models.quantizer import PointDensity, Quantizer
from ..models.results import FTable
from .errors import AmbiguousBoundaryError, ArgumentError, DegenerateDensityError
from .quadrature import cumulative_integral, trapezoid_integral, uniform_grid

logger = logging.getLogger(__name__)

STRATEGIES = ("uniform", "iid", "bennett", "optimal")

Support = Tuple[float, float]


def density_grid(support: Support,
                 size: int = QUADRATURE_CONFIG["density_grid_size"]) -> np.ndarray:
    return uniform_grid(support, size)


def marginal_h0_table(params: ModelParams, grid: np.ndarray) -> np.ndarray:
    """Marginal density of Y_0 under H0, N(0, sigma^2)."""
    return norm.pdf(grid, scale=params.sigma)


def marginal_h1_table(params: ModelParams, grid: np.ndarray) -> np.ndarray:
    """Marginal density of Y_0 under H1, N(0, 1 + sigma^2)."""
    return norm.pdf(grid, scale=math.sqrt(1.0 + params.sigma ** 2))


def iid_score_table(params: ModelParams, grid: np.ndarray) -> FTable:
    """Squared derivative of the marginal log-ratio log(p0/p1)(y).

    d/dy log(p0/p1) = -y / sigma^2 + y / (1 + sigma^2) = -y / (sigma^2 (1 + sigma^2)).
    """
    noise_var = params.sigma ** 2
    slope = 1.0 / (noise_var * (1.0 + noise_var))
    return FTable(grid=grid, values=(slope * grid) ** 2, counts=np.full(len(grid), np.inf))


def _normalized(grid: np.ndarray, values: np.ndarray,
                zeros: Tuple[float, ...] = ()) -> PointDensity:
    total = trapezoid_integral(values, grid)
    if not (total > 0.0 and math.isfinite(total)):
        raise DegenerateDensityError(f"point density cannot be normalized (integral={total})")
    return PointDensity(grid=grid, values=values / total, zeros=zeros)


def _check_spans(grid: np.ndarray, support: Support) -> None:
    lo, hi = support
    width = hi - lo
    if abs(grid[0] - lo) > 1e-9 * width or abs(grid[-1] - hi) > 1e-9 * width:
        raise ArgumentError(f"grid [{grid[0]}, {grid[-1]}] does not span support {support}")


def density_uniform(support: Support,
                    grid_size: int = QUADRATURE_CONFIG["density_grid_size"]) -> PointDensity:
    """Constant point density 1 / (y_hi - y_lo)."""
    grid = density_grid(support, grid_size)
    return PointDensity(grid=grid, values=np.full(len(grid), 1.0 / (support[1] - support[0])))


def density_optimal(f_table: FTable, p0_table: np.ndarray, support: Support,
                    zeros: Tuple[float, ...] = ()) -> PointDensity:
    """Loss-minimizing point density, proportional to [p0(y) F(y)]^(1/3).

    ``zeros`` are points where F is known to vanish, carried on the density.
    """
    p0_table = np.asarray(p0_table, dtype=float)
    if p0_table.shape != f_table.grid.shape:
        raise ArgumentError("p0_table and f_table must share the same grid")
    if np.any(p0_table < 0):
        raise ArgumentError("p0_table must be nonnegative")
    _check_spans(f_table.grid, support)
    return _normalized(f_table.grid, np.cbrt(p0_table * f_table.values), zeros)


def density_iid(params: ModelParams, support: Optional[Support] = None,
                grid_size: int = QUADRATURE_CONFIG["density_grid_size"]) -> PointDensity:
    """Point density designed from the marginals only, as if observations were i.i.d.

    It does not depend on ``a`` and vanishes at y = 0.
    """
    support = params.obs_support if support is None else support
    grid = density_grid(support, grid_size)
    zeros = (0.0,) if support[0] < 0.0 < support[1] else ()
    return density_optimal(iid_score_table(params, grid), marginal_h0_table(params, grid), support,
                           zeros)


def density_bennett(params: ModelParams, support: Optional[Support] = None,
                    grid_size: int = QUADRATURE_CONFIG["density_grid_size"]) -> PointDensity:
    """MSE-optimal (Bennett) point density: the optimal rule with F constant, i.e. p0^(1/3)."""
    support = params.obs_support if support is None else support
    grid = density_grid(support, grid_size)
    constant = FTable(grid=grid, values=np.full(len(grid), 2.0), counts=np.full(len(grid), np.inf))
    return density_optimal(constant, marginal_h0_table(params, grid), support)


def density_for_strategy(strategy: str, params: ModelParams, support: Optional[Support] = None,
                         grid_size: int = QUADRATURE_CONFIG["density_grid_size"],
                         f_table: Optional[FTable] = None) -> PointDensity:
    """Point density of one of the quantization strategies."""
    support = params.obs_support if support is None else support
    if strategy == "uniform":
        return density_uniform(support, grid_size)
    if strategy == "iid":
        return density_iid(params, support, grid_size)
    if strategy == "bennett":
        return density_bennett(params, support, grid_size)
    if strategy == "optimal":
        if f_table is None:
            raise ArgumentError("the optimal strategy needs an F table")
        grid = density_grid(support, grid_size)
        return density_optimal(f_table.resample(grid), marginal_h0_table(params, grid), support)
    raise ArgumentError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def build_quantizer(density: PointDensity, n_cells: int) -> Quantizer:
    """Compand ``density`` into ``n_cells`` cells of equal density mass.

    Boundary b_j solves int_{y_lo}^{b_j} zeta = j / N on the linear interpolant
    of the cumulative trapezoid integral; representatives sit at cell centers.
    """
    if n_cells < 1:
        raise ArgumentError(f"need at least one cell, got {n_cells}")
    grid = density.grid
    cumulative = cumulative_integral(density.values, grid)
    total = cumulative[-1]
    if not total > 0.0:
        raise DegenerateDensityError("point density is identically zero")
    cumulative = cumulative / total

    targets = np.arange(1, n_cells) / n_cells
    upper = np.searchsorted(cumulative, targets, side="left")
    lower = upper - 1
    following = np.minimum(upper + 1, len(grid) - 1)
    ambiguous = (cumulative[upper] == targets) & (cumulative[following] == targets)
    if np.any(ambiguous):
        raise AmbiguousBoundaryError(
            f"quantiles {targets[ambiguous].tolist()} fall where the density vanishes"
        )
    fraction = (targets - cumulative[lower]) / (cumulative[upper] - cumulative[lower])
    inner = grid[lower] + fraction * (grid[upper] - grid[lower])

    boundaries = np.concatenate(([grid[0]], inner, [grid[-1]]))
    if np.any(np.diff(boundaries) <= 0):
        raise AmbiguousBoundaryError(
            f"density grid of {len(grid)} points too coarse for {n_cells} cells"
        )
    reps = 0.5 * (boundaries[:-1] + boundaries[1:])
    return Quantizer(boundaries=boundaries, reps=reps)


def quantize(q: Quantizer, y) -> Union[int, np.ndarray]:
    """Cell index of each observation; out-of-support values are clamped to the edge cells."""
    observations = np.asarray(y, dtype=float)
    if np.isnan(observations).any():
        raise ArgumentError("cannot quantize NaN")
    cells = np.searchsorted(q.boundaries[1:-1], observations, side="right")
    return int(cells) if cells.ndim == 0 else cells
