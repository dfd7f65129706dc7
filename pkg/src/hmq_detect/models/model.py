"""
Gauss-Markov model parameters, state grids and sampled paths.
"""
import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..config.settings import MODEL_DEFAULTS
from ..core.errors import ArgumentError


class Hypothesis(Enum):
    """Hypothesis under which a path is drawn."""
    H0 = "H0"
    H1 = "H1"


@dataclass(frozen=True)
class ModelParams:
    """AR(1)-in-noise hypothesis pair.

    Under H0 the observations are i.i.d. N(0, sigma^2). Under H1 they are an
    AR(1) state with correlation ``a`` and unit stationary variance, truncated
    to [-state_trunc, state_trunc], plus the same noise.
    """
    a: float
    sigma: float
    state_trunc: float = MODEL_DEFAULTS["state_trunc"]
    state_grid_size: int = MODEL_DEFAULTS["state_grid_size"]
    obs_support: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not (0.0 <= self.a < 1.0):
            raise ArgumentError(f"a must lie in [0, 1), got {self.a}")
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ArgumentError(f"sigma must be positive, got {self.sigma}")
        if not self.state_trunc > 0.0:
            raise ArgumentError(f"state_trunc must be positive, got {self.state_trunc}")
        if int(self.state_grid_size) < 2:
            raise ArgumentError(f"state_grid_size must be >= 2, got {self.state_grid_size}")
        if self.obs_support is None:
            half = MODEL_DEFAULTS["support_half_width_sigmas"] * self.sigma
            object.__setattr__(self, "obs_support", (-half, half))
        else:
            lo, hi = (float(v) for v in self.obs_support)
            if not lo < hi:
                raise ArgumentError(f"obs_support must satisfy y_lo < y_hi, got {self.obs_support}")
            object.__setattr__(self, "obs_support", (lo, hi))
        object.__setattr__(self, "state_grid_size", int(self.state_grid_size))

    @property
    def innovation_scale(self) -> float:
        """Standard deviation sqrt(1 - a^2) of the AR(1) innovation."""
        return math.sqrt(1.0 - self.a * self.a)

    @property
    def support_width(self) -> float:
        return self.obs_support[1] - self.obs_support[0]

    def with_a(self, a: float) -> "ModelParams":
        """Copy with a different correlation coefficient."""
        return ModelParams(
            a=a,
            sigma=self.sigma,
            state_trunc=self.state_trunc,
            state_grid_size=self.state_grid_size,
            obs_support=self.obs_support,
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelParams":
        """Create ModelParams from dictionary data."""
        support = data.get("obs_support")
        return cls(
            a=float(data["a"]),
            sigma=float(data["sigma"]),
            state_trunc=float(data.get("state_trunc", MODEL_DEFAULTS["state_trunc"])),
            state_grid_size=int(data.get("state_grid_size", MODEL_DEFAULTS["state_grid_size"])),
            obs_support=tuple(support) if support is not None else None,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert ModelParams to dictionary."""
        return {
            "a": self.a,
            "sigma": self.sigma,
            "state_trunc": self.state_trunc,
            "state_grid_size": self.state_grid_size,
            "obs_support": list(self.obs_support),
        }


@dataclass(frozen=True, eq=False)
class StateGrid:
    """Discretized H1 state chain on a uniform midpoint grid of [-c, c]."""
    nodes: np.ndarray
    weights: np.ndarray
    q1_matrix: np.ndarray
    stationary: np.ndarray
    log_rho: float
    iterations: int = 0

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def rho(self) -> float:
        """Mixing ratio sigma^- / sigma^+ of the discretized transition density.

        Clamped to the smallest positive float; use ``log_rho`` for strongly
        correlated chains.
        """
        return max(math.exp(self.log_rho), sys.float_info.min)

    @property
    def contraction(self) -> float:
        return 1.0 - self.rho

    @property
    def spacing(self) -> float:
        return float(self.weights[0])


@dataclass(frozen=True, eq=False)
class PathSample:
    """One sampled observation path; ``states`` is None under H0."""
    hypothesis: Hypothesis
    observations: np.ndarray
    states: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.states is not None and len(self.states) != len(self.observations):
            raise ArgumentError("states and observations must have equal length")

    def __len__(self) -> int:
        return len(self.observations)
