import itertools

import numpy as np
import pytest

from saekit import (
    EmptyDomainError,
    EnumeratedDesign,
    IndependentPairwise,
    domain_direct_estimates,
    hajek_proportion,
    hajek_variance_general,
    hajek_variance_simplified,
    ht_proportion,
)
from saekit.population import GeneratorConfig, generate_synthetic_population
from saekit.sampling import SampleDesignConfig, draw_sample


class TestHajekProportion:
    def test_all_zero(self):
        theta, _ = hajek_proportion([0, 0, 0], [2.0, 3.0, 4.0])
        assert theta == 0.0

    def test_equal_weights_is_sample_proportion(self):
        y = np.array([1, 0, 0, 1, 1.0])
        theta, _ = hajek_proportion(y, np.full(5, 7.0))
        assert theta == pytest.approx(y.mean())

    def test_hand_example(self):
        theta, n_hat = hajek_proportion([1, 0, 1], [2.0, 1.0, 1.0])
        assert n_hat == 4.0
        assert theta == pytest.approx(3.0 / 4.0)

    def test_empty_domain_signal(self):
        with pytest.raises(EmptyDomainError):
            hajek_proportion([], [])

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        y = rng.integers(0, 2, 20).astype(float)
        w = rng.uniform(1, 10, 20)
        t1, _ = hajek_proportion(y, w)
        t2, _ = hajek_proportion(y, 3.7 * w)
        assert t1 == pytest.approx(t2, rel=1e-14)


class TestHtProportion:
    def test_empty_sum(self):
        assert ht_proportion([], [], 10) == 0.0

    def test_census_exact(self):
        y = np.array([1, 0, 1, 0.0])
        assert ht_proportion(y, np.ones(4), 4) == pytest.approx(y.mean())

    def test_exhaustive_unbiased_srswor(self):
        # All 6 samples of size 2 from N=4; HT mean must equal the truth.
        y = np.array([1, 1, 0, 0.0])
        n, size = 2, 4
        w = np.full(n, size / n)
        values = [ht_proportion(y[list(s)], w, size)
                  for s in itertools.combinations(range(size), n)]
        assert np.mean(values) == pytest.approx(y.mean(), abs=1e-12)


class TestSimplifiedVariance:
    def test_identical_values(self):
        assert hajek_variance_simplified([1, 1, 1], [2.0, 3.0, 4.0]) == 0.0

    def test_unit_weights(self):
        assert hajek_variance_simplified([1, 0, 1], [1.0, 1.0, 1.0]) == 0.0

    def test_hand_example(self):
        # theta = 1/2, each term 2*1*(1/2)^2, sum 1, N_hat^2 = 16
        assert hajek_variance_simplified([1, 0], [2.0, 2.0]) == pytest.approx(0.0625)


class TestGeneralVariance:
    def test_zero_residuals(self):
        pi = np.array([0.5, 0.5])
        provider = IndependentPairwise(pi)
        assert hajek_variance_general([1, 1], pi, provider.pair_matrix()) == 0.0

    def test_independence_collapses_to_simplified(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = rng.integers(2, 12)
            y = rng.integers(0, 2, n).astype(float)
            pi = rng.uniform(0.05, 0.9, n)
            provider = IndependentPairwise(pi)
            general = hajek_variance_general(y, pi, provider.pair_matrix())
            simplified = hajek_variance_simplified(y, 1.0 / pi)
            assert general == pytest.approx(simplified, rel=1e-12, abs=1e-15)

    def test_zero_joint_probability_rejected(self):
        pi = np.array([0.5, 0.5])
        joint = np.array([[0.5, 0.0], [0.0, 0.5]])
        with pytest.raises(ValueError):
            hajek_variance_general([1, 0], pi, joint)

    def test_matches_independent_double_sum_oracle(self):
        # Brute-force transcription of the double sum, coded separately.
        design = EnumeratedDesign.srswor(5, 2)
        sample = np.array([0, 3])
        y = np.array([1.0, 0.0])
        pi = design.first_order(sample)
        joint = design.pair_matrix(sample)

        w = 1.0 / pi
        theta = (w * y).sum() / w.sum()
        expected = 0.0
        for a in range(2):
            for b in range(2):
                expected += (1 - pi[a] * pi[b] / joint[a, b]) \
                    * (y[a] - theta) * (y[b] - theta) / (pi[a] * pi[b])
        expected /= w.sum() ** 2

        actual = hajek_variance_general(y, pi, joint)
        assert actual == pytest.approx(expected, abs=1e-12)


def _population_variance_eq3(y, design):
    """Approximate variance target: full-population double sum with exact
    first- and second-order probabilities."""
    n_units = y.shape[0]
    theta = y.mean()
    pi = design.first_order()
    joint = design.pair_matrix()
    total = 0.0
    for k in range(n_units):
        for l in range(n_units):
            total += (joint[k, l] - pi[k] * pi[l]) \
                * (y[k] - theta) * (y[l] - theta) / (pi[k] * pi[l])
    return total / n_units ** 2


class TestExhaustiveDesignOracle:
    """SRSWOR N=6, n=3: every one of the 20 samples enumerated."""

    y = np.array([1.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    design = EnumeratedDesign.srswor(6, 3)

    def _per_sample(self):
        estimates, variances, probs = [], [], []
        for sample, prob in self.design.iter_samples():
            pi = self.design.first_order(sample)
            theta, _ = hajek_proportion(self.y[sample], 1.0 / pi)
            estimates.append(theta)
            variances.append(hajek_variance_general(
                self.y[sample], pi, self.design.pair_matrix(sample)))
            probs.append(prob)
        return np.array(estimates), np.array(variances), np.array(probs)

    def test_ht_exactly_unbiased(self):
        values = []
        for sample, prob in self.design.iter_samples():
            pi = self.design.first_order(sample)
            values.append(prob * ht_proportion(self.y[sample], 1.0 / pi, 6))
        assert sum(values) == pytest.approx(self.y.mean(), abs=1e-12)

    def test_eq3_target_matches_exhaustive_variance(self):
        estimates, _, probs = self._per_sample()
        mean = (probs * estimates).sum()
        exhaustive = (probs * (estimates - mean) ** 2).sum()
        target = _population_variance_eq3(self.y, self.design)
        assert target == pytest.approx(exhaustive, rel=0.15)

    def test_variance_estimator_nearly_unbiased(self):
        estimates, variances, probs = self._per_sample()
        mean = (probs * estimates).sum()
        exhaustive = (probs * (estimates - mean) ** 2).sum()
        assert (probs * variances).sum() == pytest.approx(exhaustive, rel=0.15)


class TestDomainSweep:
    def test_matches_scalar_ops(self):
        pop, frame = generate_synthetic_population(
            GeneratorConfig(m_domains=4, population_size=1200), seed=9)
        sample = draw_sample(pop, SampleDesignConfig(n_households=120, seed=2))
        est = domain_direct_estimates(sample, "unemployed")
        for d in range(4):
            mask = sample.domain_id == d + 1
            if not mask.any():
                continue
            y = sample.y["unemployed"][mask]
            w = sample.weight[mask]
            theta, n_hat = hajek_proportion(y, w)
            assert est.theta[d] == pytest.approx(theta, rel=1e-12)
            assert est.n_hat[d] == pytest.approx(n_hat, rel=1e-12)
            assert est.psi[d] == pytest.approx(hajek_variance_simplified(y, w),
                                               rel=1e-12, abs=1e-18)

    def test_empty_domain_marked(self):
        pop, frame = generate_synthetic_population(
            GeneratorConfig(m_domains=6, population_size=1500), seed=1)
        sample = draw_sample(pop, SampleDesignConfig(n_households=3, seed=4))
        est = domain_direct_estimates(sample, "employed")
        empty = est.n == 0
        assert empty.any()
        assert np.all(np.isnan(est.theta[empty]))
        assert np.all(np.isnan(est.psi[empty]))
        observed = ~empty
        assert np.all(est.n_hat[observed] > 0)
