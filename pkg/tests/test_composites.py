import numpy as np
import pytest

from saekit import (
    CompositeInputs,
    adaptive_ssd,
    combine_variances,
    linear_combination,
    mse_composition,
    mse_difference,
    optimal_lambda,
    oracle_optimal_composite,
    risk_curve,
    ssd_weight,
    variance_ratio_composite,
)


class TestLinearCombination:
    def test_endpoints(self):
        assert linear_combination(1.0, 0.08, 0.04) == 0.08
        assert linear_combination(0.0, 0.08, 0.04) == 0.04

    def test_hand_example(self):
        assert linear_combination(0.25, 0.08, 0.04) == pytest.approx(0.05)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            linear_combination(1.2, 0.1, 0.2)
        with pytest.raises(ValueError):
            linear_combination(-0.1, 0.1, 0.2)

    def test_between_inputs(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            lam = rng.uniform(0, 1)
            d, s = rng.uniform(0, 1, 2)
            c = linear_combination(lam, d, s)
            assert min(d, s) - 1e-15 <= c <= max(d, s) + 1e-15


class TestOptimalLambda:
    def test_symmetry(self):
        assert optimal_lambda(1.0, 1.0, 0.0) == 0.5

    def test_perfect_synthetic(self):
        assert optimal_lambda(2.0, 0.0, 0.0) == 0.0

    def test_hand_example(self):
        assert optimal_lambda(3.0, 1.0, 0.0) == pytest.approx(0.25)

    def test_degenerate_denominator(self):
        with pytest.raises(ValueError):
            optimal_lambda(1.0, 1.0, 1.0)


class TestSsdWeight:
    def test_above_threshold(self):
        assert ssd_weight(1.1, 1.0, 1.0) == 1.0

    def test_below_threshold(self):
        assert ssd_weight(0.5, 1.0, 2.0) == pytest.approx(0.25)

    def test_small_delta_limit(self):
        assert ssd_weight(0.3, 1.0, 1e-9) == 1.0

    def test_continuous_at_boundary(self):
        ratio = 0.8
        below = ssd_weight(ratio, 1.0, ratio - 1e-12)
        at = ssd_weight(ratio, 1.0, ratio)
        above = ssd_weight(ratio, 1.0, ratio + 1e-12)
        assert at == 1.0
        assert below == 1.0
        assert above == pytest.approx(1.0, rel=1e-10)

    def test_monotonicities(self):
        deltas = np.linspace(0.1, 5, 40)
        values = np.array([ssd_weight(0.9, 1.0, d) for d in deltas])
        assert np.all(np.diff(values) <= 1e-15)
        n_hats = np.linspace(0, 2, 40)
        values = ssd_weight(n_hats, 1.0, 1.5)
        assert np.all(np.diff(values) >= -1e-15)
        assert np.all((values >= 0) & (values <= 1))

    def test_rejects_nonpositive_delta(self):
        with pytest.raises(ValueError):
            ssd_weight(1.0, 1.0, 0.0)


class TestVarianceRatioComposite:
    def test_tie_keeps_direct(self):
        triple = combine_variances([0.01], [0.01])
        theta, lam = variance_ratio_composite([0.07], [0.03], triple)
        assert lam[0] == 1.0
        assert theta[0] == 0.07

    def test_zero_count_domain_fully_synthetic(self):
        triple = combine_variances([0.01], [0.0])
        theta, lam = variance_ratio_composite([0.0], [0.03], triple)
        assert lam[0] == 0.0
        assert theta[0] == 0.03

    def test_hand_example(self):
        triple = combine_variances([0.02], [0.01])
        theta, lam = variance_ratio_composite([0.10], [0.06], triple)
        assert lam[0] == pytest.approx(0.5)
        assert theta[0] == pytest.approx(0.08)

    def test_missing_direct_falls_back(self):
        triple = combine_variances([0.02], [0.0])
        theta, lam = variance_ratio_composite([np.nan], [0.055], triple)
        assert theta[0] == 0.055

    def test_bounded_by_inputs(self):
        rng = np.random.default_rng(1)
        s = rng.uniform(1e-4, 0.05, 100)
        d = rng.uniform(0, 0.05, 100)
        triple = combine_variances(s, d)
        theta_d = rng.uniform(0, 1, 100)
        theta_s = rng.uniform(0, 1, 100)
        theta, _ = variance_ratio_composite(theta_d, theta_s, triple)
        assert np.all(theta >= np.minimum(theta_d, theta_s) - 1e-15)
        assert np.all(theta <= np.maximum(theta_d, theta_s) + 1e-15)


class TestMseEstimators:
    def test_difference_zero_case(self):
        assert mse_difference(0.05, 0.05, 0.0, 0.0) == 0.0

    def test_difference_hand_example(self):
        assert mse_difference(0.07, 0.05, 0.0005, 0.0001) == pytest.approx(0.0)

    def test_difference_preserves_negative(self):
        assert mse_difference(0.05, 0.05, 0.0003, 0.0001) == pytest.approx(-0.0002)

    def test_composition_endpoints(self):
        assert mse_composition(0.0, 0.04, 0.01) == pytest.approx(0.01)
        assert mse_composition(1.0, 0.04, 0.01) == pytest.approx(0.01)

    def test_composition_hand_example(self):
        assert mse_composition(0.5, 0.04, 0.01) == pytest.approx(0.02)

    def test_composition_no_variance(self):
        assert mse_composition(0.5, 0.04, 0.0) == pytest.approx(0.25 * 0.04)

    def test_composition_nonnegative_randomized(self):
        rng = np.random.default_rng(2)
        lam = rng.uniform(0, 1, 100_000)
        psi = rng.uniform(0, 0.2, 100_000)
        var = rng.uniform(0, 0.1, 100_000)
        assert np.all(mse_composition(lam, psi, var) >= 0.0)


def _inputs(theta_d, theta_syn, n_hat, n_domain, var_d, var_s, cov):
    return CompositeInputs(
        theta_d=np.asarray(theta_d, dtype=np.float64),
        theta_syn=np.asarray(theta_syn, dtype=np.float64),
        n_hat=np.asarray(n_hat, dtype=np.float64),
        n_domain=np.asarray(n_domain, dtype=np.float64),
        var_d=np.asarray(var_d, dtype=np.float64),
        var_s=np.asarray(var_s, dtype=np.float64),
        cov_ds=np.asarray(cov, dtype=np.float64))


class TestRiskCurve:
    def test_constant_below_minimum_ratio(self):
        inputs = _inputs([0.1, 0.2, 0.05], [0.08, 0.15, 0.06],
                         [120, 260, 80], [100, 250, 100],
                         [1e-4, 2e-4, 3e-4], [1e-5, 2e-5, 1e-5], [0.0, 0.0, 0.0])
        ratios = inputs.n_hat / inputs.n_domain
        deltas = np.array([0.1, 0.2, 0.4, ratios.min()])
        values = risk_curve(inputs, deltas)
        assert np.all(values == values[0])

    def test_hand_composed_three_domains(self):
        # One delta, lambda known per domain: compose the three difference
        # MSE estimates by hand and average.
        inputs = _inputs([0.10, 0.04, 0.07], [0.06, 0.05, 0.07],
                         [90, 120, 50], [100, 100, 100],
                         [4e-4, 3e-4, 5e-4], [1e-4, 6e-5, 2e-4],
                         [5e-5, 2e-5, 1e-4])
        delta = 1.2
        expected = []
        for i in range(3):
            ratio = inputs.n_hat[i] / inputs.n_domain[i]
            lam = 1.0 if ratio >= delta else ratio / delta
            comp = lam * inputs.theta_d[i] + (1 - lam) * inputs.theta_syn[i]
            diff_var = (1 - lam) ** 2 * (inputs.var_d[i] + inputs.var_s[i]
                                         - 2 * inputs.cov_ds[i])
            comp_var = lam ** 2 * inputs.var_d[i] + (1 - lam) ** 2 * inputs.var_s[i] \
                + 2 * lam * (1 - lam) * inputs.cov_ds[i]
            expected.append((comp - inputs.theta_d[i]) ** 2 - diff_var + comp_var)
        value = risk_curve(inputs, [delta])[0]
        assert value == pytest.approx(np.mean(expected), rel=1e-12)

    def test_empty_grid_rejected(self):
        inputs = _inputs([0.1], [0.1], [1.0], [1.0], [1e-4], [1e-5], [0.0])
        with pytest.raises(ValueError):
            risk_curve(inputs, [])

    def test_single_domain_constant_segment(self):
        inputs = _inputs([0.1], [0.08], [100.0], [100.0], [2e-4], [5e-5], [0.0])
        values = risk_curve(inputs, [0.25, 0.5, 0.75, 1.0])
        assert np.all(values == values[0])


class TestAdaptiveSsd:
    def test_flat_curve_picks_smallest_delta(self):
        # Ratios above the whole grid keep lambda == 1 everywhere, so the
        # curve is bit-identical and the tie rule returns the first point.
        inputs = _inputs([0.1, 0.2], [0.07, 0.15], [1200, 2400], [100, 200],
                         [1e-4, 2e-4], [1e-5, 2e-5], [0.0, 0.0])
        solution = adaptive_ssd(inputs)
        assert solution.delta_star == 0.25
        assert solution.theta == pytest.approx(inputs.theta_d)

    def test_direct_equal_synthetic_composition_invariant(self):
        # Synthetic equal to direct: the composition never changes with
        # delta, so any minimizer is valid.
        inputs = _inputs([0.1, 0.2], [0.1, 0.2], [100, 200], [100, 200],
                         [1e-4, 2e-4], [1e-4, 2e-4], [1e-4, 2e-4])
        solution = adaptive_ssd(inputs)
        assert solution.theta == pytest.approx(inputs.theta_d)
        for delta in (0.25, 1.0, 4.0, 10.0):
            lam = inputs.lambda_at(delta)
            composed = lam * inputs.theta_d + (1 - lam) * inputs.theta_syn
            assert composed == pytest.approx(inputs.theta_d)

    def test_unimodal_hand_built_minimum(self):
        # Single domain with ratio 1: lambda(delta) = min(1/delta, 1) and the
        # difference-based MSE is quadratic in lambda with minimum at
        # lambda* = 1 - var_d / (theta_d - theta_syn)^2; var_d = 2/3 puts the
        # optimum at delta = 3.
        inputs = _inputs([1.0], [0.0], [100.0], [100.0], [2.0 / 3.0], [0.05], [0.0])
        solution = adaptive_ssd(inputs)
        assert solution.delta_star == pytest.approx(3.0, abs=0.05)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        inputs = _inputs(rng.uniform(0, 0.2, 8), rng.uniform(0, 0.2, 8),
                         rng.uniform(50, 150, 8), np.full(8, 100.0),
                         rng.uniform(1e-5, 1e-3, 8), rng.uniform(1e-6, 1e-4, 8),
                         np.zeros(8))
        first = adaptive_ssd(inputs)
        second = adaptive_ssd(inputs)
        assert first.delta_star == second.delta_star
        assert np.array_equal(first.theta, second.theta)

    def test_solution_risk_is_minimum_of_curve(self):
        rng = np.random.default_rng(5)
        inputs = _inputs(rng.uniform(0, 0.2, 6), rng.uniform(0, 0.2, 6),
                         rng.uniform(50, 150, 6), np.full(6, 100.0),
                         rng.uniform(1e-5, 1e-3, 6), rng.uniform(1e-6, 1e-4, 6),
                         np.zeros(6))
        solution = adaptive_ssd(inputs)
        r_star = risk_curve(inputs, [solution.delta_star])[0]
        assert np.all(r_star <= solution.risk_values + 1e-15)


class TestOracleOptimalComposite:
    def test_perfect_synthetic(self):
        truths = np.array([0.1])
        d = np.array([[0.12], [0.08], [0.11], [0.09]])
        s = np.full((4, 1), 0.1)
        oracle = oracle_optimal_composite(d, s, truths)
        assert oracle.mse_s[0] == 0.0
        assert oracle.covariance[0] == 0.0
        assert oracle.lambda_star[0] == 0.0

    def test_identical_estimators_tie(self):
        truths = np.array([0.1])
        d = np.array([[0.12], [0.08], [0.11], [0.09]])
        oracle = oracle_optimal_composite(d, d.copy(), truths)
        assert oracle.lambda_star[0] == 0.5

    def test_manual_four_replicate_archive(self):
        # Spreadsheet-style check of the weight formula on a tiny archive.
        truths = np.array([0.10])
        d = np.array([[0.14], [0.06], [0.12], [0.08]])
        s = np.array([[0.11], [0.11], [0.09], [0.09]])
        err_d = d[:, 0] - 0.10
        err_s = s[:, 0] - 0.10
        mse_d = np.mean(err_d ** 2)
        mse_s = np.mean(err_s ** 2)
        c = np.mean(err_d * err_s)
        expected = (mse_s - c) / (mse_d + mse_s - 2 * c)

        oracle = oracle_optimal_composite(d, s, truths)
        assert oracle.lambda_star[0] == pytest.approx(expected, rel=1e-12)
        assert oracle.theta == pytest.approx(
            expected * d + (1 - expected) * s, rel=1e-12)

    def test_rejects_single_replicate(self):
        with pytest.raises(ValueError):
            oracle_optimal_composite(np.array([[0.1]]), np.array([[0.1]]),
                                     np.array([0.1]))

    def test_skips_missing_direct_replicates(self):
        truths = np.array([0.1])
        d = np.array([[0.12], [np.nan], [0.08], [0.1]])
        s = np.array([[0.1], [0.2], [0.1], [0.1]])
        oracle = oracle_optimal_composite(d, s, truths)
        err_d = np.array([0.02, -0.02, 0.0])
        assert oracle.mse_d[0] == pytest.approx(np.mean(err_d ** 2))
        assert np.isnan(oracle.theta[1, 0])
