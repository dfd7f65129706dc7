"""
Tests for the error-exponent engines and the asymptotic loss.
"""
import math

import numpy as np
import pytest
from scipy.special import gamma

from hmq_detect.config.experiment import MonteCarloSettings
from hmq_detect.core.errors import ArgumentError
from hmq_detect.core.likelihood import default_score_window
from hmq_detect.core.model import build_state_grid
from hmq_detect.core.quantizer import (build_quantizer, density_bennett, density_grid, density_iid,
                                       density_optimal, density_uniform, iid_score_table,
                                       marginal_h0_table)
from hmq_detect.models.model import ModelParams
from hmq_detect.models.quantizer import PointDensity
from hmq_detect.models.results import FTable, LossResult
from hmq_detect.services.exponent import (compute_D, convergence_sweep, estimate_F, estimate_K,
                                          estimate_KN, f_table_gaussian, k_iid_closed_form,
                                          kl_gaussian, kn_iid_closed_form, lower_bound_D,
                                          predicted_exponent)

K_IID = 0.5 * (math.log(2.0) - 0.5)
# (1/24) (int [phi(y) y^2 / 4]^(1/3) dy)^3 in closed form
D_OPTIMAL_IID = (2 * math.pi) ** -0.5 * 6 ** 2.5 * gamma(5 / 6) ** 3 / 4 / 24


def iid_tables(params):
    grid = density_grid(params.obs_support)
    return grid, iid_score_table(params, grid), marginal_h0_table(params, grid)


def exact_tables(params):
    grid = density_grid(params.obs_support)
    window = default_score_window(params)
    return grid, f_table_gaussian(params, grid, window, window), marginal_h0_table(params, grid)


def test_closed_form_exponents(iid_params):
    assert kl_gaussian(1.0, math.sqrt(2.0)) == pytest.approx(0.0965735, abs=1e-7)
    assert k_iid_closed_form(iid_params) == pytest.approx(K_IID, rel=1e-12)


def test_symmetric_binary_quantizer_has_zero_exponent(iid_params):
    q = build_quantizer(density_uniform(iid_params.obs_support), 2)
    assert kn_iid_closed_form(q, iid_params) == pytest.approx(0.0, abs=1e-15)


def test_refining_the_quantizer_increases_the_exponent(iid_params):
    coarse = build_quantizer(density_uniform(iid_params.obs_support), 4)
    fine = build_quantizer(density_uniform(iid_params.obs_support), 8)
    assert 0 < kn_iid_closed_form(coarse, iid_params) < kn_iid_closed_form(fine, iid_params)
    assert kn_iid_closed_form(fine, iid_params) < k_iid_closed_form(iid_params)


def test_uniform_loss_closed_form(iid_params):
    grid, f_table, p0 = iid_tables(iid_params)
    loss = compute_D(density_uniform(iid_params.obs_support), f_table, p0, iid_params.obs_support)
    assert not loss.divergent
    assert loss.value == pytest.approx(100.0 / 24.0, abs=1e-3)


def test_optimal_loss_matches_gamma_reference(iid_params):
    grid, f_table, p0 = iid_tables(iid_params)
    density = density_optimal(f_table, p0, iid_params.obs_support)
    loss = compute_D(density, f_table, p0, iid_params.obs_support)
    assert D_OPTIMAL_IID == pytest.approx(0.52705, abs=1e-4)
    assert loss.value == pytest.approx(D_OPTIMAL_IID, rel=1e-3)
    assert lower_bound_D(f_table, p0, iid_params.obs_support) == pytest.approx(D_OPTIMAL_IID,
                                                                               rel=1e-3)


def test_exact_f_reduces_to_marginal_score_when_independent(iid_params):
    grid = density_grid(iid_params.obs_support)
    exact = f_table_gaussian(iid_params, grid, 5, 5)
    np.testing.assert_allclose(exact.values, iid_score_table(iid_params, grid).values,
                               rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("a", [0.3, 0.6, 0.9])
def test_optimal_density_attains_lower_bound(a):
    params = ModelParams(a=a, sigma=1.0)
    support = params.obs_support
    grid, f_table, p0 = exact_tables(params)
    bound = lower_bound_D(f_table, p0, support)
    optimal = density_optimal(f_table, p0, support)
    assert compute_D(optimal, f_table, p0, support).value == pytest.approx(bound, rel=1e-6)

    perturbed = PointDensity(grid=grid, values=optimal.values * (1.0 + 0.3 * np.sin(grid)))
    for density in (density_uniform(support), perturbed, density_bennett(params)):
        loss = compute_D(density, f_table, p0, support)
        assert not loss.divergent
        assert loss.value > bound * (1 + 1e-6)


@pytest.mark.parametrize("a", [0.3, 0.9])
def test_iid_density_diverges_under_correlation(a):
    params = ModelParams(a=a, sigma=1.0)
    grid, f_table, p0 = exact_tables(params)
    loss = compute_D(density_iid(params), f_table, p0, params.obs_support)
    assert loss.divergent
    assert math.isinf(float(loss))


def test_iid_density_is_optimal_when_independent(iid_params):
    grid, f_table, p0 = iid_tables(iid_params)
    loss = compute_D(density_iid(iid_params), f_table, p0, iid_params.obs_support)
    assert not loss.divergent
    assert loss.value == pytest.approx(D_OPTIMAL_IID, rel=1e-3)


@pytest.mark.parametrize("support", [(-10.0, 11.0), (-9.9, 10.3)])
def test_iid_density_diverges_when_its_zero_falls_between_nodes(support):
    params = ModelParams(a=0.5, sigma=1.0, obs_support=support)
    grid, f_table, p0 = exact_tables(params)
    assert not np.any(grid == 0.0)

    iid = density_iid(params)
    assert iid.zeros == (0.0,)
    assert compute_D(iid, f_table, p0, support).divergent

    uniform = compute_D(density_uniform(support), f_table, p0, support)
    optimal = compute_D(density_optimal(f_table, p0, support), f_table, p0, support)
    assert not uniform.divergent and not optimal.divergent
    assert optimal.value < uniform.value


def test_off_grid_zero_stays_finite_when_independent():
    params = ModelParams(a=0.0, sigma=1.0, obs_support=(-9.9, 10.3))
    grid, f_table, p0 = iid_tables(params)
    loss = compute_D(density_iid(params), f_table, p0, params.obs_support)
    assert not loss.divergent
    assert loss.value == pytest.approx(lower_bound_D(f_table, p0, params.obs_support), rel=1e-3)


@pytest.mark.parametrize("a", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_loss_ordering_across_correlation(a):
    params = ModelParams(a=a, sigma=1.0)
    support = params.obs_support
    grid, f_table, p0 = exact_tables(params)
    optimal = compute_D(density_optimal(f_table, p0, support), f_table, p0, support)
    uniform = compute_D(density_uniform(support), f_table, p0, support)
    assert not optimal.divergent and not uniform.divergent
    assert optimal.value < uniform.value
    assert compute_D(density_iid(params), f_table, p0, support).divergent


def test_normalized_convention_agrees(params):
    grid, f_table, p0 = exact_tables(params)
    loss = compute_D(density_bennett(params), f_table, p0, params.obs_support)
    assert loss.normalized_value == pytest.approx(loss.value, rel=1e-10)
    assert len(loss.refinement_sums) == 3


def test_vanishing_order_decides_divergence():
    support = (-1.0, 1.0)
    grid = density_grid(support)
    f_table = FTable(grid=grid, values=np.ones(len(grid)), counts=np.full(len(grid), np.inf))
    p0 = np.full(len(grid), 0.5)

    linear = compute_D(PointDensity(grid=grid, values=np.abs(grid)), f_table, p0, support)
    assert linear.divergent

    # zeta ~ |y|^(1/4): the integrand ~ |y|^(-1/2) is integrable
    mild = compute_D(PointDensity(grid=grid, values=np.abs(grid) ** 0.25), f_table, p0, support)
    assert not mild.divergent
    assert mild.value == pytest.approx(0.5 * 1.6 ** 2 * 4.0 / 24.0, rel=0.1)


def test_loss_requires_matching_support(params):
    grid, f_table, p0 = exact_tables(params)
    with pytest.raises(ArgumentError):
        compute_D(density_uniform(params.obs_support), f_table, p0, (-5.0, 5.0))


def test_predicted_exponent():
    assert predicted_exponent(0.1, LossResult(value=0.5, divergent=False), 10) == pytest.approx(
        0.095)
    assert predicted_exponent(0.1, 2.0, 2) == pytest.approx(-0.4)
    assert predicted_exponent(0.1, LossResult.diverged(), 64) == -math.inf


def test_gap_decays_at_rate_two(iid_params):
    grid, f_table, p0 = iid_tables(iid_params)
    density = density_optimal(f_table, p0, iid_params.obs_support)
    n_list = [8, 16, 32, 64, 128]
    gaps = np.array([
        K_IID - kn_iid_closed_form(build_quantizer(density, n), iid_params) for n in n_list
    ])
    assert np.all(gaps > 0)
    slope = np.polyfit(np.log(n_list), np.log(gaps), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.3)

    scaled = np.array(n_list) ** 2 * gaps
    assert scaled[1] == pytest.approx(scaled[2], rel=0.25)
    loss = compute_D(density, f_table, p0, iid_params.obs_support)
    assert scaled[-1] == pytest.approx(loss.value, rel=0.1)


def test_closed_form_sweep(iid_params):
    grid, f_table, p0 = iid_tables(iid_params)
    density = density_optimal(f_table, p0, iid_params.obs_support)
    loss = compute_D(density, f_table, p0, iid_params.obs_support)
    mc = MonteCarloSettings(path_len=1000, n_paths=2, n_trials=1000, seed=1, workers=1)
    rows = convergence_sweep(iid_params, density, [16, 64], mc, loss=loss)
    assert [row.N for row in rows] == [16, 64]
    for row in rows:
        assert row.kn_std_error == 0.0 and row.gap_std_error == 0.0
        assert row.kn + row.gap == pytest.approx(K_IID, rel=1e-12)
        assert row.scaled_gap == pytest.approx(row.N ** 2 * row.gap)
        assert row.predicted == pytest.approx(K_IID - loss.value / row.N ** 2)


def test_sweep_validates_cell_counts(iid_params, small_mc):
    density = density_uniform(iid_params.obs_support)
    for n_list in ([], [8, 4], [1, 4]):
        with pytest.raises(ArgumentError):
            convergence_sweep(iid_params, density, n_list, small_mc)


def test_monte_carlo_sweep_uses_paired_paths(params, grid):
    mc = MonteCarloSettings(path_len=2000, n_paths=4, n_trials=1000, seed=3, workers=1)
    rows = convergence_sweep(params, density_uniform(params.obs_support), [4, 8], mc, grid)
    assert all(row.gap_std_error > 0 for row in rows)
    assert all(row.kn_std_error > 0 for row in rows)
    assert rows[0].gap > rows[1].gap
    assert rows[0].predicted is None


def test_estimate_K_matches_closed_form(iid_params):
    estimate = estimate_K(iid_params, None, path_len=5000, n_paths=8, seed=11)
    assert estimate.n_samples == 8 and len(estimate.per_path) == 8
    assert estimate.std_error > 0
    assert abs(estimate.value - K_IID) < max(4 * estimate.std_error, 2e-3)
    assert estimate.k0 - estimate.k1 == pytest.approx(estimate.value, rel=1e-9)


def test_estimate_KN_matches_discrete_kl(iid_params, uniform4):
    estimate = estimate_KN(uniform4, iid_params, build_state_grid(iid_params), path_len=4000,
                           n_paths=6, seed=5)
    expected = kn_iid_closed_form(uniform4, iid_params)
    assert abs(estimate.value - expected) < max(4 * estimate.std_error, 2e-3)


def test_estimates_validate_sizes(iid_params):
    with pytest.raises(ArgumentError):
        estimate_K(iid_params, None, path_len=50, n_paths=4, seed=1)
    with pytest.raises(ArgumentError):
        estimate_K(iid_params, None, path_len=500, n_paths=0, seed=1)


def test_estimate_K_does_not_depend_on_worker_count(params):
    serial = estimate_K(params, None, path_len=300, n_paths=4, seed=21, workers=1)
    parallel = estimate_K(params, None, path_len=300, n_paths=4, seed=21, workers=2)
    assert serial.per_path == parallel.per_path


def test_estimate_K_vanishes_under_heavy_noise():
    params = ModelParams(a=0.5, sigma=100.0)
    estimate = estimate_K(params, None, path_len=2000, n_paths=8, seed=13)
    assert estimate.value < 1e-3


def test_longer_paths_shrink_the_spread_of_K(params):
    # same master seed: replicate i shares its child stream at every length
    spreads = [np.std(estimate_K(params, None, path_len=n, n_paths=24, seed=31).per_path, ddof=1)
               for n in (1000, 2000, 4000)]
    assert spreads[1] < spreads[0]
    assert spreads[2] < spreads[1]


def test_kernel_f_recovers_marginal_score(iid_params):
    eval_grid = np.linspace(-3.0, 3.0, 61)
    table = estimate_F(iid_params, path_len=4000, n_paths=8, window_m=5, window_k=5,
                       bandwidth=None, eval_grid=eval_grid, seed=17)
    inside = (np.abs(eval_grid) >= 0.5) & (np.abs(eval_grid) <= 3.0)
    np.testing.assert_allclose(table.values[inside], eval_grid[inside] ** 2 / 4, rtol=0.1)
    np.testing.assert_allclose(table.values[inside], table.values[inside][::-1], rtol=0.1)
    assert table.values[30] < 0.01


def test_estimate_F_validates_windows(iid_params):
    with pytest.raises(ArgumentError):
        estimate_F(iid_params, 1000, 2, 0, 5, None, np.linspace(-1, 1, 5), seed=1)
    with pytest.raises(ArgumentError):
        estimate_F(iid_params, 20, 2, 30, 30, None, np.linspace(-1, 1, 5), seed=1)


@pytest.mark.slow
def test_kernel_f_matches_exact_f_under_correlation(params):
    window = default_score_window(params)
    eval_grid = np.linspace(-2.0, 2.0, 41)
    table = estimate_F(params, path_len=20000, n_paths=8, window_m=window, window_k=window,
                       bandwidth=None, eval_grid=eval_grid, seed=29)
    exact = f_table_gaussian(params, eval_grid, window, window)
    assert not table.flagged.any()
    np.testing.assert_allclose(table.values, exact.values, rtol=0.15)


@pytest.mark.slow
def test_estimate_K_acceptance_scale(iid_params):
    estimate = estimate_K(iid_params, None, path_len=20000, n_paths=32, seed=20240601)
    assert abs(estimate.value - K_IID) <= 3 * estimate.std_error + 1e-4
