import numpy as np
import pytest

from saekit import (
    BootstrapConfig,
    EmptyDomainError,
    bootstrap_variance,
    hajek_proportion,
    make_replicate_weights,
)
from saekit.population import GeneratorConfig, generate_synthetic_population
from saekit.sampling import SampleDesignConfig, draw_sample


def _toy_sample(weights=(1.0, 3.0)):
    """One person per household, explicit weights."""
    from saekit.sampling import Sample
    n = len(weights)
    w = np.asarray(weights, dtype=np.float64)
    return Sample(
        person_id=np.arange(1, n + 1, dtype=np.int64),
        household_id=np.arange(1, n + 1, dtype=np.int64),
        domain_id=np.ones(n, dtype=np.int64),
        weight=w,
        y={"unemployed": np.zeros(n), "employed": np.ones(n)},
        person_household_index=np.arange(n, dtype=np.int64),
        sampled_household_id=np.arange(1, n + 1, dtype=np.int64),
        sampled_household_weight=w,
        n_domains=1,
    )


class TestReplicateWeights:
    def test_two_households(self):
        sample = _toy_sample((2.0, 5.0))
        weights = make_replicate_weights(sample, BootstrapConfig(b_replicates=50, seed=0))
        assert weights.m_resample == 1
        for b in range(50):
            mult = weights.multiplicities[b]
            assert mult.sum() == 1
            ws = weights.household_weights(b)
            picked = int(np.flatnonzero(mult)[0])
            assert ws[picked] == pytest.approx(2.0 * sample.weight[picked])
            assert ws[1 - picked] == 0.0

    def test_multiplicities_sum_to_m(self):
        pop, _ = generate_synthetic_population(
            GeneratorConfig(m_domains=3, population_size=900), seed=2)
        sample = draw_sample(pop, SampleDesignConfig(n_households=40, seed=7))
        weights = make_replicate_weights(sample, BootstrapConfig(b_replicates=300, seed=1))
        assert np.all(weights.multiplicities.sum(axis=1) == weights.m_resample)

    def test_mean_preservation(self):
        sample = _toy_sample((1.5, 2.5, 4.0, 1.0, 3.0))
        b = 2000
        weights = make_replicate_weights(sample, BootstrapConfig(b_replicates=b, seed=3))
        stacked = np.stack([weights.household_weights(i) for i in range(b)])
        mean = stacked.mean(axis=0)
        # Var(w*_l) = w_l^2 (n'/m)^2 m p(1-p) with p = 1/n'
        n_hh = sample.n_households
        p = 1.0 / n_hh
        se = sample.weight * (n_hh / weights.m_resample) \
            * np.sqrt(weights.m_resample * p * (1 - p) / b)
        assert np.all(np.abs(mean - sample.weight) <= 3 * se)

    def test_rejects_single_household(self):
        sample = _toy_sample((2.0,))
        with pytest.raises(ValueError):
            make_replicate_weights(sample, BootstrapConfig(b_replicates=10))

    def test_determinism(self):
        sample = _toy_sample((1.0, 2.0, 3.0))
        a = make_replicate_weights(sample, BootstrapConfig(b_replicates=64, seed=11))
        b = make_replicate_weights(sample, BootstrapConfig(b_replicates=64, seed=11))
        assert np.array_equal(a.multiplicities, b.multiplicities)
        c = make_replicate_weights(sample, BootstrapConfig(b_replicates=64, seed=12))
        assert not np.array_equal(a.multiplicities, c.multiplicities)


class TestBootstrapVariance:
    def test_constant_estimator(self):
        sample = _toy_sample((1.0, 2.0, 3.0))
        weights = make_replicate_weights(sample, BootstrapConfig(b_replicates=100, seed=0))
        result = bootstrap_variance(lambda w: 1.23, weights)
        assert result.variance == pytest.approx(0.0, abs=1e-25)
        assert result.n_used == 100

    def test_total_of_weights_two_household_enumeration(self):
        # n'=2, m=1: the replicate total is 2*w1 or 2*w2 with equal chance.
        # For w=(1,3) the enumerated values {2, 6} have variance 4.
        sample = _toy_sample((1.0, 3.0))
        weights = make_replicate_weights(sample, BootstrapConfig(b_replicates=4000, seed=5))
        result = bootstrap_variance(lambda w: w.sum(), weights)
        values = {2.0, 6.0}
        totals = {float(weights.person_weights(b).sum()) for b in range(100)}
        assert totals <= values
        assert result.variance == pytest.approx(4.0, rel=0.1)

    def test_linear_estimator_mean_converges(self):
        sample = _toy_sample((1.0, 2.0, 3.0, 4.0, 5.0, 6.0))
        weights = make_replicate_weights(sample, BootstrapConfig(b_replicates=5000, seed=6))
        c = np.array([2.0, -1.0, 0.5, 3.0, 1.0, -0.5])
        result = bootstrap_variance(lambda w: float(c @ w), weights)
        assert result.mean == pytest.approx(float(c @ sample.weight), rel=0.02)

    def test_exclusion_accounting_and_limit(self):
        sample = _toy_sample((1.0, 2.0, 3.0))

        calls = {"n": 0}

        def flaky(w):
            calls["n"] += 1
            if calls["n"] % 10 == 0:
                raise EmptyDomainError("synthetic failure")
            return float(w.sum())

        weights = make_replicate_weights(sample, BootstrapConfig(b_replicates=100, seed=7))
        result = bootstrap_variance(flaky, weights)
        assert result.n_used + result.n_excluded == 100
        assert result.n_excluded == 10

        def mostly_broken(w):
            raise EmptyDomainError("always")

        with pytest.raises(RuntimeError, match="bootstrap replicates failed"):
            bootstrap_variance(mostly_broken, weights)

    def test_hajek_proportion_near_srs_oracle(self):
        # Equal-size households make the design near-SRS; the bootstrap
        # variance of a domain proportion should match (1-f) p(1-p)/n_i.
        pop, frame = generate_synthetic_population(
            GeneratorConfig(m_domains=2, population_size=3000, household_size_max=1,
                            unemployed_range=(0.2, 0.4), employed_range=(0.3, 0.5)),
            seed=4)
        sample = draw_sample(pop, SampleDesignConfig(n_households=300, seed=9))
        mask = sample.domain_id == 1
        y = sample.y["unemployed"]

        def domain_proportion(person_weights):
            w = person_weights[mask]
            active = w > 0
            if not np.any(active):
                raise EmptyDomainError("domain emptied")
            return hajek_proportion(y[mask][active], w[active])[0]

        weights = make_replicate_weights(sample, BootstrapConfig(b_replicates=2000, seed=10))
        result = bootstrap_variance(domain_proportion, weights)

        p_hat = hajek_proportion(y[mask], sample.weight[mask])[0]
        n_i = int(mask.sum())
        f = 300.0 / pop.n_households
        analytic = (1 - f) * p_hat * (1 - p_hat) / n_i
        assert result.variance == pytest.approx(analytic, rel=0.15)
