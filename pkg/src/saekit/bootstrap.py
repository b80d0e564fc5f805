"""Household-level with-replacement bootstrap for design variances.

Each replicate draws m = n' - 1 households with replacement from the n'
sampled households and rescales the design weights by n' * m_l / m, where
m_l is the number of times household l was drawn.  The variance estimate is
the plain mean of squared deviations over replicates (divisor B).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .direct import EmptyDomainError
from .sampling import Sample


@dataclass(frozen=True)
class BootstrapConfig:
    b_replicates: int = 200
    seed: int | tuple = 0

    def validate(self) -> None:
        if self.b_replicates < 2:
            raise ValueError("bootstrap needs at least 2 replicates")


@dataclass(frozen=True)
class ReplicateWeightSet:
    """Household multiplicities and the matching replicate weights."""

    multiplicities: np.ndarray       # (B, n') int64, rows sum to m
    household_weight: np.ndarray     # (n',) base design weights
    person_household_index: np.ndarray  # (n,) person -> household position
    person_weight: np.ndarray        # (n,) base person weights
    m_resample: int                  # n' - 1

    @property
    def n_replicates(self) -> int:
        return self.multiplicities.shape[0]

    @property
    def n_households(self) -> int:
        return self.multiplicities.shape[1]

    @property
    def factor(self) -> float:
        """Weight rescaling n'/m shared by every replicate."""
        return self.n_households / self.m_resample

    def household_weights(self, b: int) -> np.ndarray:
        return self.factor * self.multiplicities[b] * self.household_weight

    def person_weights(self, b: int) -> np.ndarray:
        return (self.factor * self.multiplicities[b])[self.person_household_index] \
            * self.person_weight


def make_replicate_weights(sample: Sample, config: BootstrapConfig) -> ReplicateWeightSet:
    """Draw B independent multiplicity vectors; stream b is seeded by (seed, b)."""
    config.validate()
    n_households = sample.n_households
    if n_households < 2:
        raise ValueError("bootstrap requires a sample with at least 2 households")
    m = n_households - 1
    seed = config.seed if isinstance(config.seed, tuple) else (config.seed,)
    pvals = np.full(n_households, 1.0 / n_households)
    mult = np.empty((config.b_replicates, n_households), dtype=np.int64)
    for b in range(config.b_replicates):
        rng = np.random.default_rng(seed + (b,))
        mult[b] = rng.multinomial(m, pvals)
    return ReplicateWeightSet(
        multiplicities=mult,
        household_weight=sample.sampled_household_weight,
        person_household_index=sample.person_household_index,
        person_weight=sample.weight,
        m_resample=m,
    )


@dataclass(frozen=True)
class BootstrapVariance:
    variance: float
    mean: float
    n_used: int
    n_excluded: int


def bootstrap_variance(estimator: Callable[[np.ndarray], float],
                       weights: ReplicateWeightSet,
                       max_failure_share: float = 0.2) -> BootstrapVariance:
    """Design-variance estimate of an estimator evaluated on person weights.

    ``estimator`` maps a replicate person-weight vector to a number; a
    replicate raising EmptyDomainError is excluded and counted.  More than
    ``max_failure_share`` exclusions is an error.
    """
    values = []
    excluded = 0
    for b in range(weights.n_replicates):
        try:
            values.append(float(estimator(weights.person_weights(b))))
        except EmptyDomainError:
            excluded += 1
    if excluded > max_failure_share * weights.n_replicates:
        raise RuntimeError(
            f"{excluded} of {weights.n_replicates} bootstrap replicates failed "
            f"(more than {max_failure_share:.0%})")
    arr = np.asarray(values)
    mean = float(arr.mean())
    return BootstrapVariance(
        variance=float(np.mean((arr - mean) ** 2)),
        mean=mean,
        n_used=arr.size,
        n_excluded=excluded,
    )
