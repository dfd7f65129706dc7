"""
Configuration settings for hmq-detect.
"""
import os
from typing import Any, Dict

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Gauss-Markov model defaults
MODEL_DEFAULTS: Dict[str, Any] = {
    "a": 0.5,
    "sigma": 1.0,
    "state_trunc": 4.0,  # half-width c of the state support [-c, c]
    "state_grid_size": 200,
    "support_half_width_sigmas": 10.0,  # obs_support = [-10 sigma, 10 sigma]
}

# State-grid discretization
GRID_CONFIG: Dict[str, Any] = {
    "power_iter_tol": 1e-12,
    "power_iter_max": 200_000,
}

# Quadrature and density tables
QUADRATURE_CONFIG: Dict[str, Any] = {
    "density_grid_size": 4097,  # odd, so composite Simpson applies
    "divergence_growth": 0.10,  # relative growth per refinement flagged as divergent
    "zero_density_rel_tol": 1e-12,
    "zero_order_offset": 4,  # grid spacings between an off-grid zero and the nearest order sample
    "convention_rel_tol": 1e-10,
}

# Score function and F(y) estimation
SCORE_CONFIG: Dict[str, Any] = {
    "min_window": 30,
    "window_tol": 1e-8,
    "bandwidth_scale": 0.25,  # Silverman-style: scale * std * n^(-1/5)
    "eval_grid_size": 201,
    "min_effective_count": 5.0,
    "anchor_chunk": 20_000,
}

# Monte Carlo settings
MC_CONFIG: Dict[str, Any] = {
    "path_len": 20_000,
    "n_paths": 32,
    "n_trials": 20_000,
    "seed": 20_240_601,
    "workers": int(os.getenv("HMQ_WORKERS", "1")),
    "trial_chunk": 1_000,
}

# Neyman-Pearson detector settings
DETECTOR_CONFIG: Dict[str, Any] = {
    "alpha": 0.1,
    "n_list": [20, 50, 100, 200],
    "regime_ratio": 4,  # warn when n < regime_ratio * N
    "rule_of_three": 3.0,
}

# Output settings
OUTPUT_CONFIG: Dict[str, Any] = {
    "output_dir": os.getenv("HMQ_OUTPUT_DIR", "results"),
    "float_format": "{:.17g}",
    "divergent_token": "divergent",
    "manifest_name": "manifest.json",
}

# Logging configuration
LOGGING_CONFIG: Dict[str, Any] = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
            "stream": "ext://sys.stderr",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": os.getenv("HMQ_LOG_LEVEL", "INFO"),
    },
}

# Rotating file handler added by the CLI inside the output directory
LOG_FILE_HANDLER: Dict[str, Any] = {
    "class": "logging.handlers.RotatingFileHandler",
    "filename": "run.log",
    "maxBytes": 10485760,  # 10MB
    "backupCount": 5,
    "formatter": "verbose",
}
