"""
Result records produced by the estimation engines and experiments.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..core.errors import ArgumentError


@dataclass(frozen=True, eq=False)
class ExponentEstimate:
    """Monte Carlo estimate of an error exponent, in nats per sample.

    ``per_path`` keeps one normalized LLR per replicate; ``k0`` and ``k1`` are
    the chain-rule components when they were computed (K = K0 - K1).
    """
    value: float
    std_error: float
    n_samples: int
    path_len: int = 0
    per_path: Tuple[float, ...] = ()
    k0: Optional[float] = None
    k1: Optional[float] = None

    def __post_init__(self):
        if self.std_error < 0 or self.n_samples < 1:
            raise ArgumentError("std_error must be >= 0 and n_samples >= 1")

    @classmethod
    def from_samples(cls, samples: np.ndarray, path_len: int = 0, **components) -> "ExponentEstimate":
        """Mean and standard error across replicates."""
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        std_error = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(
            value=float(np.mean(samples)),
            std_error=std_error,
            n_samples=n,
            path_len=path_len,
            per_path=tuple(float(s) for s in samples),
            **components,
        )

    def to_dict(self) -> Dict[str, Any]:
        result = {
            "value": self.value,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
            "path_len": self.path_len,
        }
        if self.k0 is not None:
            result["k0"] = self.k0
            result["k1"] = self.k1
        return result


@dataclass(frozen=True, eq=False)
class FTable:
    """Conditional second moment F(y) of the score function under H0."""
    grid: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    flagged: np.ndarray = field(default=None)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if not (grid.shape == values.shape == counts.shape):
            raise ArgumentError("grid, values and counts must have equal shapes")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ArgumentError("F values must be finite and nonnegative")
        flagged = np.zeros(grid.shape, dtype=bool) if self.flagged is None else np.asarray(
            self.flagged, dtype=bool)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "flagged", flagged)

    def resample(self, grid: np.ndarray) -> "FTable":
        """Shape-preserving interpolation onto another grid, constant beyond the ends."""
        grid = np.asarray(grid, dtype=float)
        if len(self.grid) == len(grid) and np.array_equal(self.grid, grid):
            return self
        inside = np.clip(grid, self.grid[0], self.grid[-1])
        values = np.maximum(PchipInterpolator(self.grid, self.values)(inside), 0.0)
        counts = np.interp(inside, self.grid, self.counts)
        flagged = np.interp(inside, self.grid, self.flagged.astype(float)) > 0
        return FTable(grid=grid, values=values, counts=counts, flagged=flagged)


@dataclass(frozen=True)
class LossResult:
    """Asymptotic exponent loss D_zeta, or a divergence indicator."""
    value: float
    divergent: bool
    refinement_sums: Tuple[float, ...] = ()
    normalized_value: Optional[float] = None

    @classmethod
    def diverged(cls, refinement_sums: Tuple[float, ...] = ()) -> "LossResult":
        return cls(value=math.inf, divergent=True, refinement_sums=refinement_sums)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class MissEstimate:
    """Estimated miss probability with binomial standard error."""
    miss_prob: float
    std_error: float
    n_trials: int
    zero_miss: bool = False
    upper_bound: Optional[float] = None


@dataclass(frozen=True)
class NPTestResult:
    """Outcome of a Neyman-Pearson test at level alpha on n+1 sensors."""
    alpha: float
    threshold: float
    miss_prob: float
    n_sensors: int
    n_trials: int
    miss_std_error: float = 0.0
    zero_miss: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.miss_prob <= 1.0:
            raise ArgumentError(f"miss_prob must lie in [0, 1], got {self.miss_prob}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "threshold": self.threshold,
            "miss_prob": self.miss_prob,
            "miss_std_error": self.miss_std_error,
            "n_sensors": self.n_sensors,
            "n_trials": self.n_trials,
            "zero_miss": self.zero_miss,
        }


@dataclass(frozen=True)
class GapRow:
    """Empirical miss exponent -(1/n) log beta at one n.

    When no miss was observed ``bounded`` is set and ``slope`` is the lower
    bound implied by the rule-of-three upper bound on beta.
    """
    n: int
    test: NPTestResult
    slope: float
    slope_std_error: float
    bounded: bool
    reference: float
    reference_std_error: float
    predicted: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        result = {
            "n": self.n,
            **self.test.to_dict(),
            "slope": self.slope,
            "slope_std_error": self.slope_std_error,
            "bounded": self.bounded,
            "reference": self.reference,
            "reference_std_error": self.reference_std_error,
        }
        if self.predicted is not None:
            result["predicted"] = self.predicted
        return result


@dataclass(frozen=True)
class SweepRow:
    """One N of a convergence sweep: K_N and the scaled gap N^2 (K - K_N)."""
    N: int
    kn: float
    kn_std_error: float
    gap: float
    gap_std_error: float
    scaled_gap: float
    predicted: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "kn": self.kn,
            "kn_std_error": self.kn_std_error,
            "gap": self.gap,
            "gap_std_error": self.gap_std_error,
            "scaled_gap": self.scaled_gap,
            "predicted": self.predicted,
        }


@dataclass(frozen=True)
class ResultRow:
    """Flat experiment record; always tagged with the master seed and config hash."""
    values: Dict[str, Any]
    seed: int
    config_hash: str

    def to_dict(self) -> Dict[str, Any]:
        return {**self.values, "seed": self.seed, "config_hash": self.config_hash}
