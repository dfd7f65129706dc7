"""
Quantized-observation HMM: kernel, discrete-state forward filter and quantized LLR.

Log-likelihoods of cell-index sequences are reported as densities with
respect to the reference measure that weights cell j by l_j / (y_hi - y_lo):
log P(z) + sum_k log((y_hi - y_lo) / l_{z_k}). The correction is identical
under both hypotheses and cancels in the LLR.
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.stats import norm

from ..models.model import ModelParams, StateGrid
from ..models.quantizer import Quantizer
from .errors import ArgumentError, EstimationError
from .quantizer import quantize

logger = logging.getLogger(__name__)

ArrayOrFloat = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class QuantizedKernel:
    """Cell probabilities G(x_m, S_j) and densities G(x_m, S_j) / l_j on the state grid."""
    g_matrix: np.ndarray
    g_density: np.ndarray
    support: Tuple[float, float]

    @property
    def n_cells(self) -> int:
        return self.g_matrix.shape[1]


@dataclass(frozen=True, eq=False)
class DiscreteFilterState:
    """Normalized predictive state law and running log-likelihood, batched over paths."""
    alpha: np.ndarray
    loglik_accum: np.ndarray

    @classmethod
    def initial(cls, grid: StateGrid, batch: int) -> "DiscreteFilterState":
        return cls(alpha=np.tile(grid.stationary, (batch, 1)), loglik_accum=np.zeros(batch))


def _gaussian_cell_masses(boundaries: np.ndarray, centers: np.ndarray, scale: float) -> np.ndarray:
    """P(c + scale * W in cell j) for every center c; the edge cells absorb the tails."""
    edges = np.array(boundaries, dtype=float)
    edges[0], edges[-1] = -np.inf, np.inf
    centers = np.asarray(centers, dtype=float)[:, None]
    lower = (edges[:-1] - centers) / scale
    upper = (edges[1:] - centers) / scale
    # survival-function differences keep precision in the right tail
    return np.where(lower > 0, norm.sf(lower) - norm.sf(upper), norm.cdf(upper) - norm.cdf(lower))


def build_kernel(q: Quantizer, params: ModelParams, grid: StateGrid) -> QuantizedKernel:
    """Quantized observation kernel for Y = x + W, W ~ N(0, sigma^2)."""
    g_matrix = _gaussian_cell_masses(q.boundaries, grid.nodes, params.sigma)
    return QuantizedKernel(g_matrix=g_matrix, g_density=g_matrix / q.lengths, support=q.support)


def cell_probabilities(q: Quantizer, std: float) -> np.ndarray:
    """Cell masses of N(0, std^2), tails absorbed in the edge cells."""
    return _gaussian_cell_masses(q.boundaries, np.zeros(1), std)[0]


def _as_cells(z, n_cells: int) -> np.ndarray:
    cells = np.asarray(z)
    if cells.ndim == 0 or cells.shape[-1] == 0:
        raise ArgumentError("cell-index sequence must be nonempty")
    if not np.issubdtype(cells.dtype, np.integer):
        raise ArgumentError(f"cell indices must be integers, got dtype {cells.dtype}")
    if cells.min() < 0 or cells.max() >= n_cells:
        raise ArgumentError(f"cell indices must lie in [0, {n_cells})")
    return cells


def _unwrap(value: np.ndarray) -> ArrayOrFloat:
    return float(value) if np.ndim(value) == 0 else value


def reference_measure_correction(z, q: Quantizer) -> ArrayOrFloat:
    """sum_k log((y_hi - y_lo) / l_{z_k})."""
    cells = _as_cells(z, q.n_cells)
    lo, hi = q.support
    return _unwrap(np.log((hi - lo) / q.lengths)[cells].sum(axis=-1))


def discrete_filter_step(state: DiscreteFilterState, z_k: np.ndarray, kernel: QuantizedKernel,
                         grid: StateGrid) -> DiscreteFilterState:
    """Absorb one cell index per path and propagate through the transition matrix."""
    weighted = state.alpha * kernel.g_density[:, z_k].T
    mass = weighted.sum(axis=1)
    if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
        raise EstimationError("forward filter lost all probability mass")
    return DiscreteFilterState(
        alpha=(weighted / mass[:, None]) @ grid.q1_matrix,
        loglik_accum=state.loglik_accum + np.log(mass),
    )


def loglik_h1_quantized(z, kernel: QuantizedKernel, grid: StateGrid) -> ArrayOrFloat:
    """log p_{1,N}(z_{0:n}) by the normalized forward recursion on the state grid."""
    cells = _as_cells(z, kernel.n_cells)
    batch = cells.reshape(-1, cells.shape[-1])
    state = DiscreteFilterState.initial(grid, batch.shape[0])
    for k in range(batch.shape[1]):
        state = discrete_filter_step(state, batch[:, k], kernel, grid)
    lo, hi = kernel.support
    loglik = state.loglik_accum + batch.shape[1] * math.log(hi - lo)
    return _unwrap(loglik.reshape(cells.shape[:-1]))


def loglik_h0_quantized(z, q: Quantizer, params: ModelParams) -> ArrayOrFloat:
    """log p_{0,N}(z_{0:n}); under H0 the cells are i.i.d. with N(0, sigma^2) masses."""
    cells = _as_cells(z, q.n_cells)
    log_masses = np.log(cell_probabilities(q, params.sigma))
    return _unwrap(log_masses[cells].sum(axis=-1) + reference_measure_correction(cells, q))


def llr_quantized(z, q: Quantizer, kernel: QuantizedKernel, grid: StateGrid,
                  params: ModelParams) -> ArrayOrFloat:
    """Normalized quantized LLR L_{n,N} = (1/n) log p_{0,N}(z) / p_{1,N}(z)."""
    cells = _as_cells(z, q.n_cells)
    n = cells.shape[-1] - 1
    if n < 1:
        raise ArgumentError("the quantized LLR needs at least two symbols")
    h0 = loglik_h0_quantized(cells, q, params)
    h1 = loglik_h1_quantized(cells, kernel, grid)
    return (h0 - h1) / n


@dataclass(frozen=True, eq=False)
class QuantizedLLR:
    """Quantize raw observation paths and evaluate their quantized LLR."""
    q: Quantizer
    kernel: QuantizedKernel
    grid: StateGrid
    params: ModelParams

    @classmethod
    def build(cls, q: Quantizer, params: ModelParams, grid: StateGrid) -> "QuantizedLLR":
        return cls(q=q, kernel=build_kernel(q, params, grid), grid=grid, params=params)

    def __call__(self, y) -> ArrayOrFloat:
        return llr_quantized(quantize(self.q, y), self.q, self.kernel, self.grid, self.params)
