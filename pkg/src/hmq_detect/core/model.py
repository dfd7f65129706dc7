"""
Truncated Gauss-Markov observation model: state grid and path sampling.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from scipy.signal import lfilter
from scipy.special import logsumexp
from scipy.stats import norm

from ..config.settings import GRID_CONFIG
from ..models.model import Hypothesis, ModelParams, PathSample, StateGrid
from .errors import ArgumentError, EstimationError

logger = logging.getLogger(__name__)

MAX_REJECTIONS = 10_000


def build_state_grid(params: ModelParams, tol: float = GRID_CONFIG["power_iter_tol"],
                     max_iter: int = GRID_CONFIG["power_iter_max"]) -> StateGrid:
    """Discretize the truncated AR(1) kernel Q_1 by midpoint quadrature.

    Row i of ``q1_matrix`` is the truncated, renormalized Gaussian transition
    density from node i, weighted by the quadrature weights. The stationary law
    is obtained by power iteration down to an L1 residual of ``tol``.
    """
    c, size = params.state_trunc, params.state_grid_size
    spacing = 2.0 * c / size
    nodes = -c + (np.arange(size) + 0.5) * spacing
    weights = np.full(size, spacing)

    scale = params.innovation_scale
    means = params.a * nodes
    log_mass = np.log(norm.cdf((c - means) / scale) - norm.cdf((-c - means) / scale))
    log_density = norm.logpdf(nodes[None, :], loc=means[:, None], scale=scale) - log_mass[:, None]
    log_weighted = log_density + np.log(weights)[None, :]
    log_q1 = log_weighted - logsumexp(log_weighted, axis=1, keepdims=True)
    q1_matrix = np.exp(log_q1)
    # entries of q1 / weights are the discretized transition density
    log_rho = float(np.min(log_q1) - np.max(log_q1))

    stationary = np.full(size, 1.0 / size)
    for iteration in range(1, max_iter + 1):
        updated = stationary @ q1_matrix
        updated /= updated.sum()
        residual = float(np.abs(updated - stationary).sum())
        stationary = updated
        if residual < tol:
            break
    else:
        raise EstimationError(
            f"power iteration did not reach residual {tol} after {max_iter} iterations "
            f"(a={params.a}, M={size})"
        )

    logger.debug(f"State grid built: M={size}, c={c}, iterations={iteration}, log_rho={log_rho:.3f}")
    return StateGrid(
        nodes=nodes,
        weights=weights,
        q1_matrix=q1_matrix,
        stationary=stationary,
        log_rho=log_rho,
        iterations=iteration,
    )


def _truncated_innovation(previous: float, params: ModelParams, rng: np.random.Generator) -> float:
    """Rejection-sample U ~ N(0, 1) conditioned on a*previous + s*U in [-c, c]."""
    c, a, scale = params.state_trunc, params.a, params.innovation_scale
    for _ in range(MAX_REJECTIONS):
        u = rng.standard_normal()
        if abs(a * previous + scale * u) <= c:
            return u
    raise EstimationError(f"truncated innovation rejected {MAX_REJECTIONS} times from x={previous}")


def _propagate_states(params: ModelParams, x0: np.ndarray, innovations: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """Run the truncated AR(1) recursion row-wise; ``innovations`` may be redrawn in place."""
    n_paths, n_steps = innovations.shape
    a, scale, c = params.a, params.innovation_scale, params.state_trunc
    states = np.empty((n_paths, n_steps + 1))
    states[:, 0] = x0
    if n_steps == 0:
        return states

    numerator, denominator = [scale], [1.0, -a]
    states[:, 1:] = lfilter(numerator, denominator, innovations, axis=1, zi=(a * x0)[:, None])[0]
    while True:
        outside = np.abs(states[:, 1:]) > c
        rows = np.flatnonzero(outside.any(axis=1))
        if rows.size == 0:
            return states
        for row in rows:
            k = int(np.argmax(outside[row])) + 1
            previous = states[row, k - 1]
            innovations[row, k - 1] = _truncated_innovation(previous, params, rng)
            states[row, k] = a * previous + scale * innovations[row, k - 1]
            if k < n_steps:
                states[row, k + 1:] = lfilter(numerator, denominator, innovations[row, k:],
                                              zi=[a * states[row, k]])[0]


def _initial_states(grid: StateGrid, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Draw X_0 from the stationary law: a grid cell by its mass, then uniform inside it."""
    cells = rng.choice(grid.size, size=n_paths, p=grid.stationary)
    return grid.nodes[cells] + grid.spacing * (rng.random(n_paths) - 0.5)


def simulate_observations(params: ModelParams, hypothesis: Hypothesis, noise: np.ndarray,
                          x0: Optional[float] = None, innovations: Optional[np.ndarray] = None,
                          rng: Optional[np.random.Generator] = None) -> PathSample:
    """Map explicit standard-normal streams to an observation path.

    Under H1 ``innovations`` has one entry less than ``noise``; rejected
    innovations are redrawn from ``rng``.
    """
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 1 or len(noise) < 1:
        raise ArgumentError("noise must be a nonempty 1-D stream")
    if hypothesis is Hypothesis.H0:
        return PathSample(hypothesis=hypothesis, observations=params.sigma * noise)

    if x0 is None or innovations is None:
        raise ArgumentError("H1 paths need an initial state and an innovation stream")
    innovations = np.array(innovations, dtype=float).reshape(1, -1)
    if innovations.shape[1] != len(noise) - 1:
        raise ArgumentError("innovation stream must be one shorter than the noise stream")
    rng = rng if rng is not None else np.random.default_rng(0)
    states = _propagate_states(params, np.array([float(x0)]), innovations, rng)[0]
    return PathSample(hypothesis=hypothesis, observations=states + params.sigma * noise,
                      states=states)


def sample_paths(params: ModelParams, grid: Optional[StateGrid], hypothesis: Hypothesis, n: int,
                 n_paths: int, rng: np.random.Generator) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Draw ``n_paths`` paths of ``n`` observations; returns (observations, states)."""
    if n < 1 or n_paths < 1:
        raise ArgumentError(f"need n >= 1 and n_paths >= 1, got n={n}, n_paths={n_paths}")
    if hypothesis is Hypothesis.H0:
        return params.sigma * rng.standard_normal((n_paths, n)), None
    if grid is None:
        raise ArgumentError("H1 sampling needs a state grid")

    x0 = _initial_states(grid, n_paths, rng)
    innovations = rng.standard_normal((n_paths, n - 1))
    noise = rng.standard_normal((n_paths, n))
    states = _propagate_states(params, x0, innovations, rng)
    return states + params.sigma * noise, states


def sample_path(params: ModelParams, grid: Optional[StateGrid], hypothesis: Hypothesis, n: int,
                seed: int) -> PathSample:
    """Draw one path of ``n`` observations, deterministically from ``seed``."""
    rng = np.random.default_rng(seed)
    observations, states = sample_paths(params, grid, hypothesis, n, 1, rng)
    return PathSample(
        hypothesis=hypothesis,
        observations=observations[0],
        states=None if states is None else states[0],
    )


def stationary_moments(grid: StateGrid) -> Tuple[float, float]:
    """Mean and variance of the discretized stationary law."""
    mean = float(grid.stationary @ grid.nodes)
    variance = float(grid.stationary @ (grid.nodes - mean) ** 2)
    return mean, variance
