"""
Error-exponent engines: Monte Carlo K and K_N, the score second moment F(y),
the asymptotic loss D_zeta and its lower bound.
"""
import logging
import math
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config.experiment import MonteCarloSettings
from ..config.settings import QUADRATURE_CONFIG, SCORE_CONFIG
from ..core.errors import ArgumentError, EstimationError
from ..core.likelihood import loglik_components, score_weights, scores_along_path
from ..core.model import build_state_grid, sample_paths
from ..core.parallel import Seed, run_replicates, spawn_seeds
from ..core.quadrature import grows_under_refinement, nested_simpson_sums, simpson_integral
from ..core.quantized_likelihood import QuantizedLLR, cell_probabilities
from ..core.quantizer import build_quantizer
from ..models.model import Hypothesis, ModelParams, StateGrid
from ..models.quantizer import PointDensity, Quantizer
from ..models.results import ExponentEstimate, FTable, LossResult, SweepRow

logger = logging.getLogger(__name__)

MIN_PATH_LEN = 100


def kl_gaussian(std0: float, std1: float) -> float:
    """KL(N(0, std0^2) || N(0, std1^2)) in nats."""
    ratio = (std0 / std1) ** 2
    return 0.5 * (ratio - 1.0 - math.log(ratio))


def k_iid_closed_form(params: ModelParams) -> float:
    """Error exponent K of the a = 0 reduction: KL(N(0, sigma^2) || N(0, 1 + sigma^2))."""
    return kl_gaussian(params.sigma, math.sqrt(1.0 + params.sigma ** 2))


def kn_iid_closed_form(q: Quantizer, params: ModelParams) -> float:
    """Quantized exponent K_N for a = 0: the discrete KL divergence over cells."""
    p0 = cell_probabilities(q, params.sigma)
    p1 = cell_probabilities(q, math.sqrt(1.0 + params.sigma ** 2))
    mask = p0 > 0
    return float(np.sum(p0[mask] * np.log(p0[mask] / p1[mask])))


def _h0_llr_replicate(seed: np.random.SeedSequence, params: ModelParams,
                      path_len: int) -> Tuple[float, float, float]:
    rng = np.random.default_rng(seed)
    observations, _ = sample_paths(params, None, Hypothesis.H0, path_len, 1, rng)
    h0, h1 = loglik_components(observations[0], params)
    return h0 - h1, h0, h1


def _h0_quantized_llr_replicate(seed: np.random.SeedSequence, llr_fn: QuantizedLLR,
                                path_len: int) -> float:
    rng = np.random.default_rng(seed)
    observations, _ = sample_paths(llr_fn.params, None, Hypothesis.H0, path_len, 1, rng)
    return float(llr_fn(observations[0]))


def _check_path_len(path_len: int, n_paths: int) -> None:
    if path_len < MIN_PATH_LEN:
        raise ArgumentError(f"path_len must be >= {MIN_PATH_LEN}, got {path_len}")
    if n_paths < 1:
        raise ArgumentError(f"n_paths must be >= 1, got {n_paths}")


def estimate_K(params: ModelParams, grid: Optional[StateGrid], path_len: int, n_paths: int,
               seed: Seed, workers: int = 1) -> ExponentEstimate:
    """Monte Carlo estimate of K: the H0 average of the normalized LLR over long paths.

    H0 paths need no state grid; ``grid`` may be None. Replicate i uses the
    i-th child of ``seed``, the same raw path estimate_KN draws.
    """
    _check_path_len(path_len, n_paths)
    try:
        results = run_replicates(partial(_h0_llr_replicate, params=params, path_len=path_len),
                                 spawn_seeds(seed, n_paths), workers)
    except Exception as e:
        logger.error(f"Error estimating K (a={params.a}, sigma={params.sigma}): {str(e)}")
        raise
    llrs, k0, k1 = (np.array(column) for column in zip(*results))
    estimate = ExponentEstimate.from_samples(llrs, path_len, k0=float(k0.mean()),
                                             k1=float(k1.mean()))
    logger.info(f"K estimate (a={params.a}): {estimate.value:.6f} +/- {estimate.std_error:.6f}")
    return estimate


def estimate_KN(q: Quantizer, params: ModelParams, grid: Optional[StateGrid], path_len: int,
                n_paths: int, seed: Seed, workers: int = 1) -> ExponentEstimate:
    """Monte Carlo estimate of K_N from quantized H0 paths."""
    _check_path_len(path_len, n_paths)
    grid = grid if grid is not None else build_state_grid(params)
    llr_fn = QuantizedLLR.build(q, params, grid)
    try:
        llrs = run_replicates(partial(_h0_quantized_llr_replicate, llr_fn=llr_fn,
                                      path_len=path_len),
                              spawn_seeds(seed, n_paths), workers)
    except Exception as e:
        logger.error(f"Error estimating K_N (N={q.n_cells}, a={params.a}): {str(e)}")
        raise
    estimate = ExponentEstimate.from_samples(np.array(llrs), path_len)
    logger.info(f"K_N estimate (N={q.n_cells}, a={params.a}): "
                f"{estimate.value:.6f} +/- {estimate.std_error:.6f}")
    return estimate


def _score_replicate(seed: np.random.SeedSequence, params: ModelParams, path_len: int,
                     window_m: int, window_k: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    observations, _ = sample_paths(params, None, Hypothesis.H0, path_len, 1, rng)
    return scores_along_path(observations[0], params, window_m, window_k)


def _nadaraya_watson(anchors: np.ndarray, targets: np.ndarray, eval_grid: np.ndarray,
                     bandwidth: float, chunk: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gaussian-kernel regression of ``targets`` on ``anchors``; returns (means, effective counts)."""
    weight_sum = np.zeros(len(eval_grid))
    weight_sq_sum = np.zeros(len(eval_grid))
    weighted_targets = np.zeros(len(eval_grid))
    for start in range(0, len(anchors), chunk):
        x = anchors[start:start + chunk]
        kernel = np.exp(-0.5 * ((eval_grid[:, None] - x[None, :]) / bandwidth) ** 2)
        weight_sum += kernel.sum(axis=1)
        weight_sq_sum += (kernel * kernel).sum(axis=1)
        weighted_targets += kernel @ targets[start:start + chunk]
    populated = weight_sum > 0
    means = np.divide(weighted_targets, weight_sum, out=np.zeros_like(weight_sum), where=populated)
    counts = np.divide(weight_sum ** 2, weight_sq_sum, out=np.zeros_like(weight_sum),
                       where=populated)
    return means, counts


def estimate_F(params: ModelParams, path_len: int, n_paths: int, window_m: int, window_k: int,
               bandwidth: Optional[float], eval_grid: np.ndarray, seed: Seed,
               workers: int = 1) -> FTable:
    """Kernel-regression estimate of F(y) = E_0[score^2 | Y_0 = y].

    Scores of windows [t - m, t + k] are collected on H0 paths and their
    squares regressed on Y_t. Grid points with fewer than
    ``min_effective_count`` effective samples are flagged and filled from the
    nearest populated points.
    """
    if window_m < 1 or window_k < 1:
        raise ArgumentError(f"window sizes must be >= 1, got m={window_m}, k={window_k}")
    if path_len < 2 * max(window_m, window_k) + 1:
        raise ArgumentError(f"path_len {path_len} too short for windows ({window_m}, {window_k})")
    eval_grid = np.asarray(eval_grid, dtype=float)

    pairs = run_replicates(
        partial(_score_replicate, params=params, path_len=path_len, window_m=window_m,
                window_k=window_k),
        spawn_seeds(seed, n_paths), workers,
    )
    anchors = np.concatenate([p[0] for p in pairs])
    scores = np.concatenate([p[1] for p in pairs])
    logger.info(f"Collected {len(scores)} scores (a={params.a}); max |score| = "
                f"{np.max(np.abs(scores)):.4g}")

    if bandwidth is None:
        bandwidth = SCORE_CONFIG["bandwidth_scale"] * float(np.std(anchors)) * len(anchors) ** -0.2
    logger.debug(f"Kernel regression bandwidth: {bandwidth:.4g}")

    values, counts = _nadaraya_watson(anchors, scores ** 2, eval_grid, bandwidth,
                                      SCORE_CONFIG["anchor_chunk"])
    flagged = counts < SCORE_CONFIG["min_effective_count"]
    if flagged.all():
        raise EstimationError("kernel regression has no populated evaluation point")
    if flagged.any():
        logger.warning(f"{int(flagged.sum())} of {len(eval_grid)} F evaluation points are "
                       f"sparsely populated; filled from the nearest populated points")
        populated = ~flagged
        values = np.where(flagged, np.interp(eval_grid, eval_grid[populated], values[populated]),
                          values)
    return FTable(grid=eval_grid, values=values, counts=counts, flagged=flagged)


def f_table_gaussian(params: ModelParams, eval_grid: np.ndarray, window_m: int,
                     window_k: int) -> FTable:
    """Exact F for the Gaussian model.

    The score is v . Y with Y_j i.i.d. N(0, sigma^2) under H0, so
    F(y) = v_0^2 y^2 + sigma^2 sum_{j != 0} v_j^2.
    """
    eval_grid = np.asarray(eval_grid, dtype=float)
    weights = score_weights(params, window_m, window_k)
    anchor = weights[window_m]
    rest = float(weights @ weights - anchor * anchor)
    values = anchor * anchor * eval_grid ** 2 + params.sigma ** 2 * rest
    return FTable(grid=eval_grid, values=values, counts=np.full(len(eval_grid), np.inf))


def _vanishing_order(zeta: np.ndarray, index: int) -> float:
    """Order p of zeta ~ |y - y_i|^p at a zero, from the two nearest neighbours on each side."""
    orders = []
    for step in (1, -1):
        near, far = index + step, index + 2 * step
        if 0 <= far < len(zeta):
            if zeta[near] <= 0.0 or zeta[far] <= 0.0:
                return math.inf
            orders.append(math.log2(zeta[far] / zeta[near]))
    return max(orders) if orders else math.inf


def _loss_integrand(zeta: np.ndarray, product: np.ndarray) -> Tuple[np.ndarray, bool]:
    """p0 F / zeta^2 with singular nodes set to +inf, and whether a singularity is non-integrable."""
    tol = QUADRATURE_CONFIG["zero_density_rel_tol"]
    zero = zeta <= tol * zeta.max()
    singular = zero & (product > tol * product.max())
    safe = np.where(zero, 1.0, zeta)
    integrand = np.where(zero, np.where(singular, np.inf, 0.0), product / safe ** 2)
    divergent = False
    for index in np.flatnonzero(singular):
        order = _vanishing_order(zeta, index)
        logger.debug(f"Point density vanishes at node {index} with order {order:.3f}")
        divergent = divergent or 2.0 * order >= 1.0
    return integrand, divergent


def _side_orders(grid: np.ndarray, values: np.ndarray, point: float,
                 offset: float) -> Dict[int, float]:
    """One-sided power-law orders of ``values`` at ``point``, keyed by side (+1 right, -1 left)."""
    orders = {}
    for side in (1, -1):
        near, far = point + side * offset, point + 2.0 * side * offset
        if not grid[0] <= far <= grid[-1]:
            continue
        f_near, f_far = np.interp([near, far], grid, values)
        if f_near <= 0.0 or f_far <= 0.0:
            orders[side] = math.inf
        else:
            orders[side] = math.log2(f_far / f_near)
    return orders


def _known_zero_divergence(grid: np.ndarray, zeta: np.ndarray, product: np.ndarray,
                           zeros: Sequence[float]) -> bool:
    """Whether p0 F / zeta^2 fails to be integrable at any of the declared zeros of zeta.

    Near a zero z, zeta ~ |y - z|^p and p0 F ~ |y - z|^q on each side, so the
    loss integrand behaves as |y - z|^(q - 2p) and diverges when 2p - q >= 1.
    """
    offset = QUADRATURE_CONFIG["zero_order_offset"] * (grid[-1] - grid[0]) / (len(grid) - 1)
    for point in zeros:
        if not grid[0] < point < grid[-1]:
            continue
        p_orders = _side_orders(grid, zeta, point, offset)
        q_orders = _side_orders(grid, product, point, offset)
        for side, order in p_orders.items():
            if math.isinf(q_orders[side]):
                continue  # p0 F vanishes on this side
            excess = 2.0 * order - q_orders[side]
            logger.debug(f"Point density vanishes at y={point:.4g}; 2p - q = {excess:.3f}")
            if excess >= 1.0:
                return True
    return False


def _aligned(f_table: FTable, p0_table: np.ndarray, grid: np.ndarray) -> Tuple[FTable, np.ndarray]:
    f_table = f_table.resample(grid)
    p0_table = np.asarray(p0_table, dtype=float)
    if p0_table.shape != grid.shape:
        raise ArgumentError("p0_table must be tabulated on the density grid")
    return f_table, p0_table


def compute_D(density: PointDensity, f_table: FTable, p0_table: np.ndarray,
              support: Tuple[float, float]) -> LossResult:
    """Asymptotic loss D_zeta = (1/24) int p0 F / zeta^2 dy, or a divergence indicator."""
    grid = density.grid
    width = support[1] - support[0]
    if abs(grid[0] - support[0]) > 1e-9 * width or abs(grid[-1] - support[1]) > 1e-9 * width:
        raise ArgumentError(f"density grid does not span support {support}")
    f_table, p0_table = _aligned(f_table, p0_table, grid)
    zeta = density.values / simpson_integral(density.values, grid)
    product = p0_table * f_table.values

    integrand, structural = _loss_integrand(zeta, product)
    structural = structural or _known_zero_divergence(grid, zeta, product, density.zeros)
    sums = nested_simpson_sums(integrand, grid)
    growing = grows_under_refinement(sums, QUADRATURE_CONFIG["divergence_growth"])
    if structural or growing:
        logger.debug(f"D diverges (structural={structural}, growing={growing}, sums={sums})")
        return LossResult.diverged(sums)

    value = sums[-1] / 24.0
    # normalized reference measure: p0 and zeta scaled by the width, dmu = dy / width
    finite = np.where(np.isfinite(integrand), integrand, 0.0)
    normalized = width ** 2 / 24.0 * simpson_integral(finite / width, grid / width)
    return LossResult(value=value, divergent=False, refinement_sums=sums,
                      normalized_value=normalized)


def lower_bound_D(f_table: FTable, p0_table: np.ndarray, support: Tuple[float, float]) -> float:
    """Lower bound (1/24) (int [p0 F]^(1/3) dy)^3, attained by the optimal point density.

    The bound is also evaluated against the normalized reference measure and
    both forms must agree.
    """
    grid = f_table.grid
    width = support[1] - support[0]
    p0_table = np.asarray(p0_table, dtype=float)
    if p0_table.shape != grid.shape:
        raise ArgumentError("p0_table and f_table must share the same grid")
    lebesgue = simpson_integral(np.cbrt(p0_table * f_table.values), grid) ** 3 / 24.0
    normalized = width ** 2 / 24.0 * simpson_integral(
        np.cbrt(width * p0_table * f_table.values), grid / width) ** 3
    if abs(normalized - lebesgue) > QUADRATURE_CONFIG["convention_rel_tol"] * abs(lebesgue):
        raise EstimationError(f"lower bound conventions disagree: {lebesgue} vs {normalized}")
    return lebesgue


def predicted_exponent(k: float, loss: Union[float, LossResult], n_cells: int) -> float:
    """High-rate approximation K - D / N^2 of the quantized exponent."""
    value = float(loss)
    return -math.inf if math.isinf(value) else k - value / n_cells ** 2


def convergence_sweep(params: ModelParams, density: PointDensity, n_list: Sequence[int],
                      mc: MonteCarloSettings, grid: Optional[StateGrid] = None,
                      loss: Optional[LossResult] = None) -> List[SweepRow]:
    """K_N and the scaled gap N^2 (K - K_N) for every N in ``n_list``.

    For a = 0 the exact closed forms are used. Otherwise K and every K_N are
    estimated from the same H0 paths and the gap error comes from the paired
    per-path differences.
    """
    if not n_list or any(n < 2 for n in n_list) or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ArgumentError(f"N_list must be increasing with entries >= 2, got {list(n_list)}")

    closed_form = params.a == 0.0
    if closed_form:
        k_value, k_paths = k_iid_closed_form(params), None
    else:
        grid = grid if grid is not None else build_state_grid(params)
        k_estimate = estimate_K(params, grid, mc.path_len, mc.n_paths, mc.seed, mc.workers)
        k_value, k_paths = k_estimate.value, np.array(k_estimate.per_path)

    rows = []
    for n_cells in n_list:
        q = build_quantizer(density, n_cells)
        if closed_form:
            kn, kn_se, gap_se = kn_iid_closed_form(q, params), 0.0, 0.0
        else:
            estimate = estimate_KN(q, params, grid, mc.path_len, mc.n_paths, mc.seed, mc.workers)
            kn, kn_se = estimate.value, estimate.std_error
            differences = k_paths - np.array(estimate.per_path)
            gap_se = (float(np.std(differences, ddof=1) / math.sqrt(len(differences)))
                      if len(differences) > 1 else 0.0)
        gap = k_value - kn
        rows.append(SweepRow(
            N=n_cells,
            kn=kn,
            kn_std_error=kn_se,
            gap=gap,
            gap_std_error=gap_se,
            scaled_gap=n_cells ** 2 * gap,
            predicted=None if loss is None else predicted_exponent(k_value, loss, n_cells),
        ))
        logger.info(f"N={n_cells}: K_N={kn:.6f}, N^2 gap={n_cells ** 2 * gap:.4f}")
    return rows
