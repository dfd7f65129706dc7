"""
Exact unquantized log-likelihoods, the normalized LLR and the score function.

The H1 likelihood uses innovations (Kalman) filtering of the untruncated
linear-Gaussian model. All functions accept a single path (1-D) or a batch of
paths stacked along leading axes, time running along the last axis.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import cho_factor, cho_solve, toeplitz
from scipy.stats import norm

from ..config.settings import SCORE_CONFIG
from ..models.model import ModelParams
from .errors import ArgumentError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

ArrayOrFloat = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class InnovationsFilterState:
    """One-step predictive moments of X_k given Y_{0:k-1} and the running log p_1(Y_{0:k-1})."""
    pred_mean: ArrayOrFloat
    pred_var: float
    loglik_accum: ArrayOrFloat

    @classmethod
    def initial(cls, batch_shape: Tuple[int, ...] = ()) -> "InnovationsFilterState":
        """Stationary initialization: X_0 ~ N(0, 1)."""
        return cls(pred_mean=np.zeros(batch_shape), pred_var=1.0, loglik_accum=np.zeros(batch_shape))


@dataclass(frozen=True, eq=False)
class WindowScore:
    """Derivative of log(p0/p1) with respect to the anchor observation of a window."""
    window: np.ndarray
    anchor: int
    score: float


def _as_observations(y) -> np.ndarray:
    observations = np.asarray(y, dtype=float)
    if observations.ndim == 0 or observations.shape[-1] == 0:
        raise ArgumentError("observation sequence must be nonempty")
    if np.isnan(observations).any():
        raise ArgumentError("observation sequence contains NaN")
    return observations


def _unwrap(value: np.ndarray) -> ArrayOrFloat:
    return float(value) if np.ndim(value) == 0 else value


def loglik_h0(y, params: ModelParams) -> ArrayOrFloat:
    """log p_0(y_{0:n}): i.i.d. N(0, sigma^2) observations."""
    observations = _as_observations(y)
    return _unwrap(norm.logpdf(observations, scale=params.sigma).sum(axis=-1))


def filter_step(state: InnovationsFilterState, y_k: ArrayOrFloat,
                params: ModelParams) -> InnovationsFilterState:
    """Absorb one observation and predict the next state."""
    noise_var = params.sigma ** 2
    innovation_var = state.pred_var + noise_var
    innovation = y_k - state.pred_mean
    loglik = state.loglik_accum - 0.5 * (LOG_2PI + math.log(innovation_var)
                                         + innovation * innovation / innovation_var)
    gain = state.pred_var / innovation_var
    filtered_mean = state.pred_mean + gain * innovation
    filtered_var = state.pred_var * noise_var / innovation_var
    a = params.a
    return InnovationsFilterState(
        pred_mean=a * filtered_mean,
        pred_var=a * a * filtered_var + (1.0 - a * a),
        loglik_accum=loglik,
    )


def loglik_h1(y, params: ModelParams) -> ArrayOrFloat:
    """log p_1(y_{0:n}) by the chain rule over one-step predictive densities."""
    observations = _as_observations(y)
    state = InnovationsFilterState.initial(observations.shape[:-1])
    for k in range(observations.shape[-1]):
        state = filter_step(state, observations[..., k], params)
    return _unwrap(np.asarray(state.loglik_accum))


def loglik_components(y, params: ModelParams) -> Tuple[ArrayOrFloat, ArrayOrFloat]:
    """Normalized chain-rule sums ((1/n) log p_0, (1/n) log p_1); unnormalized when n = 0."""
    observations = _as_observations(y)
    n = observations.shape[-1] - 1
    scale = 1.0 / n if n > 0 else 1.0
    return loglik_h0(observations, params) * scale, loglik_h1(observations, params) * scale


def llr(y, params: ModelParams) -> ArrayOrFloat:
    """Normalized log-likelihood ratio L_n = (1/n) log p_0(Y_{0:n}) / p_1(Y_{0:n}).

    A single observation (n = 0) yields the unnormalized log-ratio.
    """
    h0, h1 = loglik_components(y, params)
    return h0 - h1


def predictive_loglik_h1(y, params: ModelParams, m: int) -> ArrayOrFloat:
    """log p_1(Y_k | Y_{k-m:k-1}) where Y_k is the last observation of ``y``."""
    observations = _as_observations(y)
    if m < 0 or observations.shape[-1] < m + 1:
        raise ArgumentError(f"need at least m + 1 = {m + 1} observations")
    window = observations[..., -(m + 1):]
    if m == 0:
        return loglik_h1(window, params)
    return loglik_h1(window, params) - loglik_h1(window[..., :-1], params)


def h1_covariance(params: ModelParams, size: int) -> np.ndarray:
    """Covariance sigma^2 I + (a^|i-j|) of ``size`` consecutive H1 observations."""
    correlations = params.a ** np.arange(size, dtype=float)
    return toeplitz(correlations) + params.sigma ** 2 * np.eye(size)


def score_weights(params: ModelParams, window_m: int, window_k: int) -> np.ndarray:
    """Weights v with d/dy_0 log(p0/p1)(Y_{-m:k}) = v . Y_{-m:k}.

    The H1 part is the anchor row of the inverse covariance, the H0 part
    contributes -1/sigma^2 at the anchor.
    """
    if window_m < 0 or window_k < 0:
        raise ArgumentError("window sizes must be nonnegative")
    size = window_m + window_k + 1
    unit = np.zeros(size)
    unit[window_m] = 1.0
    weights = cho_solve(cho_factor(h1_covariance(params, size), lower=True), unit)
    weights[window_m] -= 1.0 / params.sigma ** 2
    return weights


def window_score(y, params: ModelParams, window_m: Optional[int] = None) -> WindowScore:
    """Score of the window ``y`` = Y_{-m:k} at its anchor index m (centered by default)."""
    window = _as_observations(y)
    if window.ndim != 1:
        raise ArgumentError("window_score expects a single window")
    anchor = (len(window) - 1) // 2 if window_m is None else int(window_m)
    if not 0 <= anchor < len(window):
        raise ArgumentError(f"anchor {anchor} outside a window of length {len(window)}")
    weights = score_weights(params, anchor, len(window) - 1 - anchor)
    return WindowScore(window=window, anchor=anchor, score=float(weights @ window))


def innovations_ma_root(params: ModelParams) -> float:
    """MA root theta of the ARMA(1,1) innovations form of AR(1) plus white noise."""
    if params.a == 0.0:
        return 0.0
    noise_var = params.sigma ** 2
    ratio = ((1.0 - params.a ** 2) + noise_var * (1.0 + params.a ** 2)) / (noise_var * params.a)
    return (ratio - math.sqrt(ratio * ratio - 4.0)) / 2.0


def default_score_window(params: ModelParams, tol: float = SCORE_CONFIG["window_tol"],
                         minimum: int = SCORE_CONFIG["min_window"]) -> int:
    """Smallest window m >= ``minimum`` such that theta^m < tol."""
    theta = innovations_ma_root(params)
    if theta <= 0.0:
        return minimum
    return max(minimum, int(math.ceil(math.log(tol) / math.log(theta))))


def scores_along_path(y, params: ModelParams, window_m: int,
                      window_k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Anchor values Y_t and scores of the windows [t - m, t + k] along one path.

    Anchors stay max(m, k) samples away from both path ends.
    """
    observations = _as_observations(y)
    margin = max(window_m, window_k)
    n = observations.shape[-1]
    if n < 2 * margin + 1:
        raise ArgumentError(f"path of length {n} too short for windows of margin {margin}")
    weights = score_weights(params, window_m, window_k)
    anchors = np.arange(margin, n - margin)
    windows = sliding_window_view(observations, window_m + window_k + 1, axis=-1)
    scores = windows[..., anchors - window_m, :] @ weights
    return observations[..., anchors], scores
