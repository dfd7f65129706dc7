"""
Finite-n Neyman-Pearson test harness: threshold calibration at level alpha and
miss-probability estimation.

``llr_fn`` maps a (trials, n + 1) array of observation paths to one
normalized LLR per path; H0 is rejected when the LLR falls below the
threshold. Trials are simulated in fixed-size chunks, each with its own seed
spawned from the master seed, so results do not depend on the worker count.
"""
import logging
import math
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..config.experiment import MonteCarloSettings
from ..config.settings import DETECTOR_CONFIG, MC_CONFIG
from ..core.errors import ArgumentError, CalibrationError
from ..core.likelihood import llr
from ..core.model import build_state_grid, sample_paths
from ..core.parallel import Seed, run_replicates, spawn_seeds
from ..core.quantized_likelihood import QuantizedLLR
from ..models.model import Hypothesis, ModelParams, StateGrid
from ..models.quantizer import Quantizer
from ..models.results import ExponentEstimate, GapRow, LossResult, MissEstimate, NPTestResult
from .exponent import (estimate_K, estimate_KN, k_iid_closed_form, kn_iid_closed_form,
                       predicted_exponent)

logger = logging.getLogger(__name__)

MIN_TRIALS = 100

LLRFunction = Callable[[np.ndarray], np.ndarray]


def unquantized_llr(params: ModelParams) -> LLRFunction:
    """Exact LLR of raw observations as a picklable callable."""
    return partial(llr, params=params)


def _llr_chunk(task: Tuple[np.random.SeedSequence, int], llr_fn: LLRFunction,
               params: ModelParams, grid: Optional[StateGrid], hypothesis: Hypothesis,
               length: int) -> np.ndarray:
    seed, size = task
    rng = np.random.default_rng(seed)
    observations, _ = sample_paths(params, grid, hypothesis, length, size, rng)
    return np.atleast_1d(np.asarray(llr_fn(observations), dtype=float))


def simulate_llrs(llr_fn: LLRFunction, params: ModelParams, hypothesis: Hypothesis, n: int,
                  n_trials: int, seed: Seed, workers: int = 1,
                  grid: Optional[StateGrid] = None) -> np.ndarray:
    """LLRs of ``n_trials`` paths of n + 1 observations drawn under ``hypothesis``."""
    if n < 1:
        raise ArgumentError(f"need n >= 1 sensors beyond the first, got {n}")
    if n_trials < MIN_TRIALS:
        raise ArgumentError(f"n_trials must be >= {MIN_TRIALS}, got {n_trials}")
    if hypothesis is Hypothesis.H1 and grid is None:
        grid = build_state_grid(params)
    chunk = MC_CONFIG["trial_chunk"]
    sizes = [min(chunk, n_trials - start) for start in range(0, n_trials, chunk)]
    tasks = list(zip(spawn_seeds(seed, len(sizes)), sizes))
    worker = partial(_llr_chunk, llr_fn=llr_fn, params=params, grid=grid,
                     hypothesis=hypothesis, length=n + 1)
    return np.concatenate(run_replicates(worker, tasks, workers))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ArgumentError(f"alpha must lie in (0, 1), got {alpha}")


def threshold_from_llrs(llrs: np.ndarray, alpha: float) -> float:
    """Order statistic at index floor(alpha * n_trials) of the sorted H0 LLRs.

    At most floor(alpha * n_trials) trials lie strictly below it.
    """
    _check_alpha(alpha)
    ordered = np.sort(np.asarray(llrs, dtype=float))
    if ordered[0] == ordered[-1]:
        raise CalibrationError(f"all {len(ordered)} H0 LLRs are equal ({ordered[0]})")
    return float(ordered[int(math.floor(alpha * len(ordered)))])


def calibrate_threshold(llr_fn: LLRFunction, params: ModelParams, n: int, alpha: float,
                        n_trials: int, seed: Seed, workers: int = 1,
                        grid: Optional[StateGrid] = None) -> float:
    """Lower-tail alpha-quantile of H0 LLRs: rejecting below it keeps the false-alarm rate <= alpha."""
    _check_alpha(alpha)
    llrs = simulate_llrs(llr_fn, params, Hypothesis.H0, n, n_trials, seed, workers, grid)
    threshold = threshold_from_llrs(llrs, alpha)
    logger.debug(f"Calibrated threshold n={n}, alpha={alpha}: {threshold:.6f}")
    return threshold


def miss_from_llrs(llrs: np.ndarray, threshold: float) -> MissEstimate:
    """Fraction of H1 LLRs at or above ``threshold``, with its binomial standard error."""
    n_trials = len(llrs)
    misses = int(np.count_nonzero(np.asarray(llrs) >= threshold))
    miss_prob = misses / n_trials
    if misses == 0:
        return MissEstimate(miss_prob=0.0, std_error=0.0, n_trials=n_trials, zero_miss=True,
                            upper_bound=DETECTOR_CONFIG["rule_of_three"] / n_trials)
    return MissEstimate(
        miss_prob=miss_prob,
        std_error=math.sqrt(miss_prob * (1.0 - miss_prob) / n_trials),
        n_trials=n_trials,
    )


def estimate_miss(llr_fn: LLRFunction, params: ModelParams, n: int, threshold: float,
                  n_trials: int, seed: Seed, workers: int = 1,
                  grid: Optional[StateGrid] = None) -> MissEstimate:
    """Miss probability of the test on H1 paths of n + 1 observations."""
    llrs = simulate_llrs(llr_fn, params, Hypothesis.H1, n, n_trials, seed, workers, grid)
    return miss_from_llrs(llrs, threshold)


def _slope(miss: MissEstimate, n: int) -> Tuple[float, float]:
    """-(1/n) log beta and its delta-method standard error."""
    if miss.zero_miss:
        return -math.log(miss.upper_bound) / n, 0.0
    return -math.log(miss.miss_prob) / n, miss.std_error / (miss.miss_prob * n)


def _gap_rows(llr_fn: LLRFunction, params: ModelParams, grid: StateGrid, alpha: float,
              n_list: Sequence[int], mc: MonteCarloSettings, reference: ExponentEstimate,
              predicted: Optional[float]) -> List[GapRow]:
    rows = []
    for n, seeds in zip(n_list, np.random.SeedSequence(mc.seed).spawn(len(n_list))):
        calibration_seed, miss_seed = seeds.spawn(2)
        threshold = calibrate_threshold(llr_fn, params, n, alpha, mc.n_trials, calibration_seed,
                                        mc.workers, grid)
        miss = estimate_miss(llr_fn, params, n, threshold, mc.n_trials, miss_seed, mc.workers,
                             grid)
        slope, slope_se = _slope(miss, n)
        test = NPTestResult(alpha=alpha, threshold=threshold, miss_prob=miss.miss_prob,
                            n_sensors=n, n_trials=mc.n_trials, miss_std_error=miss.std_error,
                            zero_miss=miss.zero_miss)
        if miss.zero_miss:
            logger.info(f"n={n}: no miss in {mc.n_trials} trials; slope >= {slope:.4f}")
        else:
            logger.info(f"n={n}: beta={miss.miss_prob:.4g}, slope={slope:.4f} +/- {slope_se:.4f}")
        rows.append(GapRow(n=n, test=test, slope=slope, slope_std_error=slope_se,
                           bounded=miss.zero_miss, reference=reference.value,
                           reference_std_error=reference.std_error, predicted=predicted))
    return rows


def _reference_K(params: ModelParams, mc: MonteCarloSettings,
                 grid: StateGrid) -> ExponentEstimate:
    if params.a == 0.0:
        return ExponentEstimate(value=k_iid_closed_form(params), std_error=0.0, n_samples=1)
    return estimate_K(params, grid, mc.path_len, mc.n_paths, mc.seed, mc.workers)


def np_exponent_check(params: ModelParams, alpha: float, n_list: Sequence[int],
                      mc: MonteCarloSettings, grid: Optional[StateGrid] = None) -> List[GapRow]:
    """Unquantized NP test across ``n_list``; slopes reported against K."""
    _check_alpha(alpha)
    grid = grid if grid is not None else build_state_grid(params)
    reference = _reference_K(params, mc, grid)
    return _gap_rows(unquantized_llr(params), params, grid, alpha, n_list, mc, reference, None)


def exponent_gap_check(q: Quantizer, params: ModelParams, alpha: float, n_list: Sequence[int],
                       mc: MonteCarloSettings, grid: Optional[StateGrid] = None,
                       loss: Optional[LossResult] = None) -> List[GapRow]:
    """Quantized NP test across ``n_list``; slopes reported against K_N.

    The high-rate approximation needs n much larger than N; smaller n only
    triggers a warning.
    """
    _check_alpha(alpha)
    ratio = DETECTOR_CONFIG["regime_ratio"]
    for n in n_list:
        if n < ratio * q.n_cells:
            logger.warning(f"n={n} is outside the n >> N regime (N={q.n_cells}); "
                           f"the exponential approximation may not apply")
    grid = grid if grid is not None else build_state_grid(params)
    if params.a == 0.0:
        reference = ExponentEstimate(value=kn_iid_closed_form(q, params), std_error=0.0,
                                     n_samples=1)
    else:
        reference = estimate_KN(q, params, grid, mc.path_len, mc.n_paths, mc.seed, mc.workers)
    predicted = None
    if loss is not None:
        predicted = predicted_exponent(_reference_K(params, mc, grid).value, loss, q.n_cells)
    llr_fn = QuantizedLLR.build(q, params, grid)
    return _gap_rows(llr_fn, params, grid, alpha, n_list, mc, reference, predicted)
