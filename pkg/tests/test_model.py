"""
Tests for the Gauss-Markov model, state grid and path sampling.
"""
import dataclasses
import math

import numpy as np
import pytest

from hmq_detect.core.errors import ArgumentError
from hmq_detect.core.model import (build_state_grid, sample_path, sample_paths,
                                   simulate_observations, stationary_moments)
from hmq_detect.models.model import Hypothesis, ModelParams, PathSample


@pytest.mark.parametrize("kwargs", [
    {"a": 1.0, "sigma": 1.0},
    {"a": -0.1, "sigma": 1.0},
    {"a": 0.5, "sigma": -1.0},
    {"a": 0.5, "sigma": 0.0},
    {"a": 0.5, "sigma": 1.0, "state_trunc": 0.0},
    {"a": 0.5, "sigma": 1.0, "state_grid_size": 1},
    {"a": 0.5, "sigma": 1.0, "obs_support": (1.0, -1.0)},
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ArgumentError):
        ModelParams(**kwargs)


def test_default_support_is_ten_sigma():
    params = ModelParams(a=0.5, sigma=2.0)
    assert params.obs_support == (-20.0, 20.0)
    assert params.support_width == 40.0


def test_params_dict_round_trip():
    params = ModelParams(a=0.3, sigma=0.7, state_trunc=3.0, state_grid_size=50,
                         obs_support=(-5.0, 6.0))
    assert ModelParams.from_dict(params.to_dict()) == params
    assert params.with_a(0.9).a == 0.9
    assert params.with_a(0.9).obs_support == params.obs_support


def test_state_grid_is_a_stochastic_discretization(params, grid):
    c = params.state_trunc
    assert grid.size == 200
    assert np.all(np.abs(grid.nodes) < c)
    assert grid.weights.sum() == pytest.approx(2 * c, rel=1e-12)
    assert np.all(grid.q1_matrix >= 0)
    np.testing.assert_allclose(grid.q1_matrix.sum(axis=1), 1.0, atol=1e-12)
    assert grid.stationary.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(grid.stationary @ grid.q1_matrix, grid.stationary, atol=1e-10)


def test_stationary_law_is_symmetric_with_unit_variance(grid):
    np.testing.assert_allclose(grid.stationary, grid.stationary[::-1], atol=1e-10)
    mean, variance = stationary_moments(grid)
    assert abs(mean) < 1e-10
    assert variance == pytest.approx(1.0, abs=0.01)


def test_mixing_ratio(grid):
    assert grid.log_rho < 0
    assert 0.0 <= grid.rho < 1.0
    assert 0.0 < grid.contraction <= 1.0


def test_mixing_ratio_stays_positive_for_strong_correlation(grid):
    strong = dataclasses.replace(grid, log_rho=-1000.0)
    assert math.exp(strong.log_rho) == 0.0
    assert 0.0 < strong.rho < 1.0
    assert strong.contraction == 1.0


def test_iid_chain_has_identical_rows(iid_params):
    grid = build_state_grid(iid_params.with_a(0.0))
    np.testing.assert_allclose(grid.q1_matrix, np.tile(grid.q1_matrix[0], (grid.size, 1)),
                               atol=1e-15)
    np.testing.assert_allclose(grid.stationary, grid.q1_matrix[0], atol=1e-12)


def test_sample_path_is_deterministic(params, grid):
    first = sample_path(params, grid, Hypothesis.H1, 500, seed=3)
    second = sample_path(params, grid, Hypothesis.H1, 500, seed=3)
    other = sample_path(params, grid, Hypothesis.H1, 500, seed=4)
    np.testing.assert_array_equal(first.observations, second.observations)
    assert not np.array_equal(first.observations, other.observations)
    assert len(first) == 500


def test_h0_path_has_no_states(params):
    path = sample_path(params, None, Hypothesis.H0, 100, seed=1)
    assert path.states is None
    assert path.hypothesis is Hypothesis.H0


def test_h1_states_stay_truncated():
    params = ModelParams(a=0.9, sigma=1.0, state_trunc=1.5)
    grid = build_state_grid(params)
    observations, states = sample_paths(params, grid, Hypothesis.H1, 2000, 4,
                                        np.random.default_rng(0))
    assert observations.shape == states.shape == (4, 2000)
    assert np.all(np.abs(states) <= params.state_trunc)


def test_h0_variance(rng):
    params = ModelParams(a=0.5, sigma=2.0)
    observations, _ = sample_paths(params, None, Hypothesis.H0, 200_000, 1, rng)
    assert observations.var() == pytest.approx(4.0, rel=0.02)


def test_h1_state_autocorrelation(params, grid, rng):
    _, states = sample_paths(params, grid, Hypothesis.H1, 100_000, 1, rng)
    x = states[0]
    assert np.corrcoef(x[:-1], x[1:])[0, 1] == pytest.approx(params.a, abs=0.015)
    assert x.var() == pytest.approx(1.0, abs=0.05)


def test_h1_observations_at_strong_correlation():
    params = ModelParams(a=0.9, sigma=1.0)
    grid = build_state_grid(params)
    observations, _ = sample_paths(params, grid, Hypothesis.H1, 10_000, 4,
                                   np.random.default_rng(2024))
    lag_one = np.mean([np.corrcoef(y[:-1], y[1:])[0, 1] for y in observations])
    # a Var(X) / (Var(X) + sigma^2) with unit state variance
    assert lag_one == pytest.approx(0.45, abs=0.05)
    assert observations.var() == pytest.approx(1.0 + params.sigma ** 2, rel=0.1)


def test_mirrored_streams_give_mirrored_paths(params, rng):
    noise = rng.standard_normal(50)
    innovations = 0.5 * rng.standard_normal(49)
    path = simulate_observations(params, Hypothesis.H1, noise, x0=0.3, innovations=innovations)
    mirrored = simulate_observations(params, Hypothesis.H1, -noise, x0=-0.3,
                                     innovations=-innovations)
    np.testing.assert_allclose(mirrored.observations, -path.observations, atol=1e-12)
    np.testing.assert_allclose(mirrored.states, -path.states, atol=1e-12)


def test_simulate_observations_validates_streams(params):
    with pytest.raises(ArgumentError):
        simulate_observations(params, Hypothesis.H1, np.zeros(5), x0=0.0, innovations=np.zeros(5))
    with pytest.raises(ArgumentError):
        simulate_observations(params, Hypothesis.H1, np.zeros(5))
    assert simulate_observations(params, Hypothesis.H0, np.ones(3)).observations.tolist() == [
        1.0, 1.0, 1.0]


def test_path_sample_length_check():
    with pytest.raises(ArgumentError):
        PathSample(Hypothesis.H1, observations=np.zeros(3), states=np.zeros(2))
