"""
Shared fixtures.
"""
import numpy as np
import pytest

from hmq_detect.config.experiment import MonteCarloSettings
from hmq_detect.core.model import build_state_grid
from hmq_detect.core.quantizer import build_quantizer, density_uniform
from hmq_detect.models.model import ModelParams


@pytest.fixture
def iid_params() -> ModelParams:
    """a = 0, sigma = 1: the i.i.d. reduction with closed forms."""
    return ModelParams(a=0.0, sigma=1.0)


@pytest.fixture
def params() -> ModelParams:
    return ModelParams(a=0.5, sigma=1.0)


@pytest.fixture
def grid(params):
    return build_state_grid(params)


@pytest.fixture
def uniform4(iid_params):
    """Uniform N = 4 quantizer on [-10, 10]."""
    return build_quantizer(density_uniform(iid_params.obs_support), 4)


@pytest.fixture
def small_mc() -> MonteCarloSettings:
    return MonteCarloSettings(path_len=2000, n_paths=8, n_trials=2000, seed=7, workers=1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
