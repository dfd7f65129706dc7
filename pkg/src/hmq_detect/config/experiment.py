"""
Declarative experiment configuration.

One JSON document describes one experiment. Sections map onto frozen
dataclasses; unknown keys and out-of-range values raise ConfigError with the
dotted field path and, when the key occurs in the source text, its line.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from ..core.errors import ConfigError
from ..models.model import ModelParams
from .settings import (DETECTOR_CONFIG, MC_CONFIG, MODEL_DEFAULTS, OUTPUT_CONFIG,
                       QUADRATURE_CONFIG, SCORE_CONFIG)

logger = logging.getLogger(__name__)

EXPERIMENTS = ("fig1_densities", "fig2_loss_vs_a", "exponent_sweep", "np_test")
STRATEGIES = ("uniform", "iid", "bennett", "optimal")
F_METHODS = ("kernel", "exact")
MAX_SEED = 2 ** 64 - 1


class _Reader:
    """Validation helpers that locate offending keys in the source text."""

    def __init__(self, source: Optional[str] = None):
        self.source = source

    def line_of(self, path: str) -> Optional[int]:
        if not self.source:
            return None
        position = 0
        for part in path.split("."):
            found = self.source.find(f'"{part}"', position)
            if found < 0:
                return None
            position = found
        return self.source.count("\n", 0, position) + 1

    def fail(self, path: str, message: str) -> None:
        raise ConfigError(path, message, self.line_of(path))

    def section(self, data: Dict[str, Any], name: str, cls) -> Dict[str, Any]:
        value = data.get(name, {})
        if not isinstance(value, dict):
            self.fail(name, "must be an object")
        allowed = {f.name for f in fields(cls)}
        for key in value:
            if key not in allowed:
                self.fail(f"{name}.{key}", f"unknown key (allowed: {sorted(allowed)})")
        return value

    def number(self, path: str, value: Any, minimum: Optional[float] = None,
               maximum: Optional[float] = None, strict_min: bool = False,
               strict_max: bool = False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"must be a number, got {value!r}")
        if value != value:
            self.fail(path, "must not be NaN")
        if minimum is not None and (value < minimum or (strict_min and value == minimum)):
            self.fail(path, f"must be {'>' if strict_min else '>='} {minimum}, got {value}")
        if maximum is not None and (value > maximum or (strict_max and value == maximum)):
            self.fail(path, f"must be {'<' if strict_max else '<='} {maximum}, got {value}")
        return float(value)

    def integer(self, path: str, value: Any, minimum: Optional[int] = None,
                maximum: Optional[int] = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"must be an integer, got {value!r}")
        self.number(path, value, minimum, maximum)
        return int(value)

    def choice(self, path: str, value: Any, options: Tuple[str, ...]) -> str:
        if value not in options:
            self.fail(path, f"must be one of {list(options)}, got {value!r}")
        return value

    def int_list(self, path: str, value: Any, minimum: int) -> Tuple[int, ...]:
        if not isinstance(value, list) or not value:
            self.fail(path, "must be a nonempty list")
        items = tuple(self.integer(path, item, minimum) for item in value)
        if any(b <= a for a, b in zip(items, items[1:])):
            self.fail(path, "must be strictly increasing")
        return items


@dataclass(frozen=True)
class ModelSection:
    a: float = MODEL_DEFAULTS["a"]
    a_values: Tuple[float, ...] = ()
    sigma: float = MODEL_DEFAULTS["sigma"]
    state_trunc: float = MODEL_DEFAULTS["state_trunc"]
    state_grid_size: int = MODEL_DEFAULTS["state_grid_size"]
    obs_support: Optional[Tuple[float, float]] = None

    @classmethod
    def parse(cls, reader: _Reader, data: Dict[str, Any]) -> "ModelSection":
        raw = reader.section(data, "model", cls)
        a = reader.number("model.a", raw.get("a", cls.a), 0.0, 1.0, strict_max=True)
        a_values = raw.get("a_values", [])
        if not isinstance(a_values, list):
            reader.fail("model.a_values", "must be a list")
        support = raw.get("obs_support")
        if support is not None:
            if not isinstance(support, list) or len(support) != 2:
                reader.fail("model.obs_support", "must be a [y_lo, y_hi] pair")
            lo, hi = (reader.number("model.obs_support", v) for v in support)
            if not lo < hi:
                reader.fail("model.obs_support", f"needs y_lo < y_hi, got {support}")
            support = (lo, hi)
        return cls(
            a=a,
            a_values=tuple(reader.number("model.a_values", v, 0.0, 1.0, strict_max=True)
                           for v in a_values),
            sigma=reader.number("model.sigma", raw.get("sigma", cls.sigma), 0.0, strict_min=True),
            state_trunc=reader.number("model.state_trunc", raw.get("state_trunc", cls.state_trunc),
                                      0.0, strict_min=True),
            state_grid_size=reader.integer("model.state_grid_size",
                                           raw.get("state_grid_size", cls.state_grid_size), 2),
            obs_support=support,
        )

    def params(self, a: Optional[float] = None) -> ModelParams:
        return ModelParams(
            a=self.a if a is None else a,
            sigma=self.sigma,
            state_trunc=self.state_trunc,
            state_grid_size=self.state_grid_size,
            obs_support=self.obs_support,
        )

    def sweep_values(self) -> Tuple[float, ...]:
        """Values of ``a`` an experiment iterates over."""
        return self.a_values or (self.a,)


@dataclass(frozen=True)
class QuantizerSection:
    strategy: str = "optimal"
    N: Optional[int] = None
    N_list: Tuple[int, ...] = (4, 8, 16, 32, 64)
    density_grid_size: int = QUADRATURE_CONFIG["density_grid_size"]

    @classmethod
    def parse(cls, reader: _Reader, data: Dict[str, Any]) -> "QuantizerSection":
        raw = reader.section(data, "quantizer", cls)
        cells = raw.get("N")
        grid_size = reader.integer("quantizer.density_grid_size",
                                   raw.get("density_grid_size", cls.density_grid_size), 5)
        if (grid_size - 1) % 4:
            reader.fail("quantizer.density_grid_size", "must be 4k + 1 for nested Simpson sums")
        return cls(
            strategy=reader.choice("quantizer.strategy", raw.get("strategy", cls.strategy),
                                   STRATEGIES),
            N=None if cells is None else reader.integer("quantizer.N", cells, 1),
            N_list=reader.int_list("quantizer.N_list", raw.get("N_list", list(cls.N_list)), 2),
            density_grid_size=grid_size,
        )


@dataclass(frozen=True)
class MonteCarloSettings:
    path_len: int = MC_CONFIG["path_len"]
    n_paths: int = MC_CONFIG["n_paths"]
    n_trials: int = MC_CONFIG["n_trials"]
    seed: int = MC_CONFIG["seed"]
    workers: int = MC_CONFIG["workers"]

    @classmethod
    def parse(cls, reader: _Reader, data: Dict[str, Any]) -> "MonteCarloSettings":
        raw = reader.section(data, "mc", cls)
        return cls(
            path_len=reader.integer("mc.path_len", raw.get("path_len", cls.path_len), 100),
            n_paths=reader.integer("mc.n_paths", raw.get("n_paths", cls.n_paths), 1),
            n_trials=reader.integer("mc.n_trials", raw.get("n_trials", cls.n_trials), 100),
            seed=reader.integer("mc.seed", raw.get("seed", cls.seed), 0, MAX_SEED),
            workers=reader.integer("mc.workers", raw.get("workers", cls.workers), 1),
        )


@dataclass(frozen=True)
class FEstimationSection:
    method: str = "kernel"
    window_m: Optional[int] = None
    window_k: Optional[int] = None
    bandwidth: Optional[float] = None
    eval_grid_size: int = SCORE_CONFIG["eval_grid_size"]

    @classmethod
    def parse(cls, reader: _Reader, data: Dict[str, Any]) -> "FEstimationSection":
        raw = reader.section(data, "f_estimation", cls)
        window_m, window_k, bandwidth = (raw.get(k) for k in ("window_m", "window_k", "bandwidth"))
        return cls(
            method=reader.choice("f_estimation.method", raw.get("method", cls.method), F_METHODS),
            window_m=None if window_m is None else reader.integer("f_estimation.window_m",
                                                                  window_m, 1),
            window_k=None if window_k is None else reader.integer("f_estimation.window_k",
                                                                  window_k, 1),
            bandwidth=None if bandwidth is None else reader.number(
                "f_estimation.bandwidth", bandwidth, 0.0, strict_min=True),
            eval_grid_size=reader.integer("f_estimation.eval_grid_size",
                                          raw.get("eval_grid_size", cls.eval_grid_size), 3),
        )


@dataclass(frozen=True)
class NPTestSection:
    alpha: float = DETECTOR_CONFIG["alpha"]
    n_list: Tuple[int, ...] = tuple(DETECTOR_CONFIG["n_list"])

    @classmethod
    def parse(cls, reader: _Reader, data: Dict[str, Any]) -> "NPTestSection":
        raw = reader.section(data, "np_test", cls)
        return cls(
            alpha=reader.number("np_test.alpha", raw.get("alpha", cls.alpha), 0.0, 1.0,
                                strict_min=True, strict_max=True),
            n_list=reader.int_list("np_test.n_list", raw.get("n_list", list(cls.n_list)), 1),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """A complete experiment description."""
    experiment: str
    model: ModelSection = field(default_factory=ModelSection)
    quantizer: QuantizerSection = field(default_factory=QuantizerSection)
    mc: MonteCarloSettings = field(default_factory=MonteCarloSettings)
    f_estimation: FEstimationSection = field(default_factory=FEstimationSection)
    np_test: NPTestSection = field(default_factory=NPTestSection)
    output_dir: str = OUTPUT_CONFIG["output_dir"]

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: Optional[str] = None) -> "ExperimentConfig":
        """Validate and build a config; ``source`` is the raw text used for line numbers."""
        reader = _Reader(source)
        if not isinstance(data, dict):
            reader.fail("<document>", "top level must be an object")
        allowed = {f.name for f in fields(cls)}
        for key in data:
            if key not in allowed:
                reader.fail(key, f"unknown key (allowed: {sorted(allowed)})")
        if "experiment" not in data:
            reader.fail("experiment", "is required")
        output_dir = data.get("output_dir", OUTPUT_CONFIG["output_dir"])
        if not isinstance(output_dir, str) or not output_dir:
            reader.fail("output_dir", "must be a nonempty path string")
        return cls(
            experiment=reader.choice("experiment", data["experiment"], EXPERIMENTS),
            model=ModelSection.parse(reader, data),
            quantizer=QuantizerSection.parse(reader, data),
            mc=MonteCarloSettings.parse(reader, data),
            f_estimation=FEstimationSection.parse(reader, data),
            np_test=NPTestSection.parse(reader, data),
            output_dir=output_dir,
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """Load a JSON config file."""
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError("<file>", f"cannot read {path}: {e.strerror}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("<document>", f"invalid JSON: {e.msg}", e.lineno)
        config = cls.from_dict(data, source=text)
        logger.debug(f"Loaded {config.experiment} config from {path}")
        return config

    def with_overrides(self, output_dir: Optional[str] = None, seed: Optional[int] = None,
                       workers: Optional[int] = None) -> "ExperimentConfig":
        """Apply command-line overrides."""
        reader = _Reader()
        mc = self.mc
        if seed is not None:
            mc = replace(mc, seed=reader.integer("mc.seed", seed, 0, MAX_SEED))
        if workers is not None:
            mc = replace(mc, workers=reader.integer("mc.workers", workers, 1))
        return replace(self, mc=mc, output_dir=output_dir or self.output_dir)

    def to_dict(self) -> Dict[str, Any]:
        """Plain JSON-compatible echo of the config."""
        def section(obj) -> Dict[str, Any]:
            return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}

        return {
            "experiment": self.experiment,
            "model": section(self.model),
            "quantizer": section(self.quantizer),
            "mc": section(self.mc),
            "f_estimation": section(self.f_estimation),
            "np_test": section(self.np_test),
            "output_dir": self.output_dir,
        }

    @property
    def config_hash(self) -> str:
        """Digest of everything that determines results (worker count and output dir excluded)."""
        echo = self.to_dict()
        del echo["mc"]["workers"]
        del echo["output_dir"]
        payload = json.dumps(echo, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _plain(value: Any) -> Any:
    return list(value) if isinstance(value, tuple) else value
