"""
Tests for the quantized-observation HMM and the quantized LLR.
"""
import itertools
import math

import numpy as np
import pytest
from scipy.stats import norm

from hmq_detect.core.errors import ArgumentError
from hmq_detect.core.model import build_state_grid, sample_paths
from hmq_detect.core.quantized_likelihood import (DiscreteFilterState, QuantizedLLR, build_kernel,
                                                  cell_probabilities, discrete_filter_step,
                                                  llr_quantized, loglik_h0_quantized,
                                                  loglik_h1_quantized,
                                                  reference_measure_correction)
from hmq_detect.core.quantizer import build_quantizer, density_uniform, quantize
from hmq_detect.models.model import Hypothesis, ModelParams
from hmq_detect.models.quantizer import Quantizer


def random_quantizer(rng, support, n_cells):
    lo, hi = support
    inner = np.sort(rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo), n_cells - 1))
    boundaries = np.concatenate(([lo], inner, [hi]))
    if np.any(np.diff(boundaries) <= 1e-6):
        boundaries = np.linspace(lo, hi, n_cells + 1)
    return Quantizer(boundaries=boundaries, reps=0.5 * (boundaries[:-1] + boundaries[1:]))


def brute_force_loglik_h1(z, kernel, grid):
    """log of the sum over every grid-state path, with the same reference-measure constant."""
    size, length = grid.size, len(z)
    paths = np.array(list(itertools.product(range(size), repeat=length)))
    weights = grid.stationary[paths[:, 0]] * kernel.g_density[paths[:, 0], z[0]]
    for k in range(1, length):
        weights = (weights * grid.q1_matrix[paths[:, k - 1], paths[:, k]]
                   * kernel.g_density[paths[:, k], z[k]])
    lo, hi = kernel.support
    return math.log(weights.sum()) + length * math.log(hi - lo)


def test_single_cell_kernel(params, grid):
    q = build_quantizer(density_uniform(params.obs_support), 1)
    kernel = build_kernel(q, params, grid)
    np.testing.assert_allclose(kernel.g_matrix, 1.0, atol=1e-15)
    z = np.zeros(10, dtype=int)
    assert loglik_h1_quantized(z, kernel, grid) == pytest.approx(0.0, abs=1e-10)


def test_kernel_rows_sum_to_one(rng):
    for _ in range(20):
        params = ModelParams(a=rng.uniform(0, 0.95), sigma=rng.uniform(0.2, 3.0),
                             state_grid_size=int(rng.integers(5, 60)))
        grid = build_state_grid(params)
        q = random_quantizer(rng, params.obs_support, int(rng.integers(1, 40)))
        kernel = build_kernel(q, params, grid)
        assert np.all(kernel.g_matrix >= 0)
        np.testing.assert_allclose(kernel.g_matrix.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(kernel.g_density * q.lengths, kernel.g_matrix, rtol=1e-12)


def test_kernel_mirror_symmetry(params, grid, uniform4):
    g = build_kernel(uniform4, params, grid).g_matrix
    np.testing.assert_allclose(g, g[::-1, ::-1], atol=1e-12)


def test_filter_matches_path_sum(rng):
    checked = 0
    while checked < 50:
        size = int(rng.integers(2, 9))
        length = int(rng.integers(1, 7))
        if size ** length > 200_000:
            continue
        params = ModelParams(a=rng.uniform(0, 0.95), sigma=rng.uniform(0.3, 2.0),
                             state_grid_size=size)
        grid = build_state_grid(params)
        q = random_quantizer(rng, params.obs_support, int(rng.integers(1, 5)))
        kernel = build_kernel(q, params, grid)
        z = rng.integers(0, q.n_cells, size=length)
        assert loglik_h1_quantized(z, kernel, grid) == pytest.approx(
            brute_force_loglik_h1(z, kernel, grid), abs=1e-10)
        checked += 1


def test_filter_keeps_a_probability_vector(params, grid, rng):
    q = build_quantizer(density_uniform(params.obs_support), 8)
    kernel = build_kernel(q, params, grid)
    z = rng.integers(0, 8, size=(3, 40))
    state = DiscreteFilterState.initial(grid, 3)
    for k in range(40):
        state = discrete_filter_step(state, z[:, k], kernel, grid)
        assert np.all(state.alpha >= 0)
        np.testing.assert_allclose(state.alpha.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(state.loglik_accum + 40 * math.log(20.0),
                               loglik_h1_quantized(z, kernel, grid), rtol=1e-12)


def test_independent_observations_factorize(iid_params, rng):
    grid = build_state_grid(iid_params)
    q = build_quantizer(density_uniform(iid_params.obs_support), 8)
    kernel = build_kernel(q, iid_params, grid)
    z = rng.integers(2, 6, size=12)
    cell_mass = grid.stationary @ kernel.g_matrix
    correction = reference_measure_correction(z, q)
    expected = np.log(cell_mass[z]).sum() + correction
    assert loglik_h1_quantized(z, kernel, grid) == pytest.approx(expected, abs=1e-10)
    gaussian = np.log(cell_probabilities(q, math.sqrt(2.0))[z]).sum() + correction
    assert abs(loglik_h1_quantized(z, kernel, grid) - gaussian) / len(z) < 1e-3


def test_h0_symmetric_two_cells(iid_params):
    q = build_quantizer(density_uniform(iid_params.obs_support), 2)
    np.testing.assert_allclose(cell_probabilities(q, 1.0), [0.5, 0.5], atol=1e-15)
    assert loglik_h0_quantized([0, 1, 1], q, iid_params) == pytest.approx(0.0, abs=1e-12)


def test_h0_cell_probability(iid_params, uniform4):
    p0 = cell_probabilities(uniform4, 1.0)
    assert p0[2] == pytest.approx(norm.cdf(5) - norm.cdf(0), rel=1e-12)
    assert loglik_h0_quantized([2], uniform4, iid_params) == pytest.approx(
        math.log(p0[2] * 20 / 5), rel=1e-12)


def test_h0_additivity(iid_params, uniform4):
    z = [0, 3, 2, 2, 1]
    total = loglik_h0_quantized(z, uniform4, iid_params)
    assert total == pytest.approx(sum(loglik_h0_quantized([k], uniform4, iid_params) for k in z))


def test_symmetric_binary_quantizer_carries_no_information(iid_params, rng):
    grid = build_state_grid(iid_params)
    q = build_quantizer(density_uniform(iid_params.obs_support), 2)
    kernel = build_kernel(q, iid_params, grid)
    z = rng.integers(0, 2, size=30)
    assert llr_quantized(z, q, kernel, grid, iid_params) == pytest.approx(0.0, abs=1e-12)


def test_llr_does_not_depend_on_representatives(params, grid, uniform4, rng):
    shifted = Quantizer(boundaries=uniform4.boundaries, reps=uniform4.boundaries[:-1] + 0.1)
    z = rng.integers(0, 4, size=25)
    original = llr_quantized(z, uniform4, build_kernel(uniform4, params, grid), grid, params)
    relabeled = llr_quantized(z, shifted, build_kernel(shifted, params, grid), grid, params)
    assert original == relabeled


def test_llr_matches_path_sum_oracle(rng):
    params = ModelParams(a=0.6, sigma=0.8, state_grid_size=6)
    grid = build_state_grid(params)
    q = random_quantizer(rng, params.obs_support, 4)
    kernel = build_kernel(q, params, grid)
    z = rng.integers(0, 4, size=7)
    expected = (loglik_h0_quantized(z, q, params) - brute_force_loglik_h1(z, kernel, grid)) / 6
    assert llr_quantized(z, q, kernel, grid, params) == pytest.approx(expected, abs=1e-10)


def test_llr_validates_input(params, grid, uniform4):
    kernel = build_kernel(uniform4, params, grid)
    with pytest.raises(ArgumentError):
        llr_quantized([1], uniform4, kernel, grid, params)
    with pytest.raises(ArgumentError):
        llr_quantized([0, 4], uniform4, kernel, grid, params)
    with pytest.raises(ArgumentError):
        llr_quantized([0.0, 1.0], uniform4, kernel, grid, params)


def test_quantized_llr_callable(params, grid, uniform4, rng):
    llr_fn = QuantizedLLR.build(uniform4, params, grid)
    y = rng.normal(scale=3.0, size=(4, 15))
    expected = llr_quantized(quantize(uniform4, y), uniform4, llr_fn.kernel, grid, params)
    np.testing.assert_allclose(llr_fn(y), expected, rtol=1e-12)
    assert llr_fn(y).shape == (4,)


def test_quantized_filter_forgets_the_past(params, grid, rng):
    q = build_quantizer(density_uniform(params.obs_support), 16)
    kernel = build_kernel(q, params, grid)
    observations, _ = sample_paths(params, grid, Hypothesis.H1, 70, 20, rng)
    z = quantize(q, observations)

    def conditional(m):
        return (loglik_h1_quantized(z[:, -(m + 1):], kernel, grid)
                - loglik_h1_quantized(z[:, -(m + 1):-1], kernel, grid))

    reference = conditional(60)
    gaps = [float(np.mean(np.abs(conditional(m) - reference))) for m in (2, 8, 32)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-6


def test_state_grid_refinement_converges(rng):
    coarse_params = ModelParams(a=0.5, sigma=1.0, state_grid_size=200)
    fine_params = ModelParams(a=0.5, sigma=1.0, state_grid_size=400)
    q = build_quantizer(density_uniform(coarse_params.obs_support), 16)
    observations, _ = sample_paths(coarse_params, build_state_grid(coarse_params),
                                   Hypothesis.H1, 50, 4, rng)
    z = quantize(q, observations)
    results = []
    for p in (coarse_params, fine_params):
        grid = build_state_grid(p)
        results.append(loglik_h1_quantized(z, build_kernel(q, p, grid), grid))
    assert np.max(np.abs(results[0] - results[1])) / 50 < 1e-3
