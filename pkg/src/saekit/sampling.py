"""Household sampling with probability proportional to size, without replacement.

The scheme is randomized-order systematic PPS: household selection
probabilities are exactly ``n_households * size / total_persons`` and every
member of a selected household enters the sample.  Person design weights use
the same quantity, ``w = N / (n' * h)``, shared by all household members.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .population import STUDY_VARIABLES, Population

SAMPLE_HEADER = ["person_id", "domain_id", "household_id", "weight",
                 "y_unemployed", "y_employed"]


class DesignError(ValueError):
    """Raised for infeasible sampling configurations."""


@dataclass(frozen=True)
class SampleDesignConfig:
    n_households: int
    seed: int = 0
    scheme: str = "systematic-pps-random-order"

    def validate(self, population: Population) -> None:
        if self.scheme != "systematic-pps-random-order":
            raise DesignError(f"unknown sampling scheme {self.scheme!r}")
        if not 1 <= self.n_households <= population.n_households:
            raise DesignError(
                f"n_households must lie in 1..{population.n_households}, got {self.n_households}")


@dataclass(frozen=True)
class Sample:
    """Persons of the selected households, with design weights w = 1/pi."""

    person_id: np.ndarray            # (n,) int64
    household_id: np.ndarray         # (n,) int64
    domain_id: np.ndarray            # (n,) int64, 1..M
    weight: np.ndarray               # (n,) float64
    y: dict[str, np.ndarray]         # study variable -> (n,) float64 in {0, 1}
    person_household_index: np.ndarray  # (n,) int64 into the selected-household arrays
    sampled_household_id: np.ndarray    # (n',) int64
    sampled_household_weight: np.ndarray  # (n',) float64 (shared person weight)
    n_domains: int

    @property
    def n_persons(self) -> int:
        return self.person_id.shape[0]

    @property
    def n_households(self) -> int:
        return self.sampled_household_id.shape[0]

    def domain_counts(self) -> np.ndarray:
        return np.bincount(self.domain_id - 1, minlength=self.n_domains).astype(np.int64)


def household_inclusion_probabilities(population: Population, n_households: int) -> np.ndarray:
    """Household selection probabilities n' * h_l / N; rejects values above 1."""
    p = n_households * population.household_size / population.n_persons
    over = p > 1.0 + 1e-12
    if np.any(over):
        bad = population.household_id[over]
        raise DesignError(
            "certainty-inclusion violation: households with size * n' / N > 1: "
            f"{bad[:10].tolist()}")
    return np.minimum(p, 1.0)


def inclusion_probabilities(population: Population, config: SampleDesignConfig) -> dict[int, float]:
    """Per-person inclusion probabilities pi_k = h_l * n' / N."""
    config.validate(population)
    p = household_inclusion_probabilities(population, config.n_households)
    per_person = p[population.person_household_index]
    return dict(zip(population.person_id.tolist(), per_person.tolist()))


def _systematic_pps(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of selected units; selection probability of unit l is exactly p[l]."""
    order = rng.permutation(p.shape[0])
    cumulative = np.cumsum(p[order])
    n_draw = int(round(cumulative[-1]))
    targets = rng.random() + np.arange(n_draw)
    picked = np.searchsorted(cumulative, targets, side="right")
    return np.sort(order[picked])


def draw_sample(population: Population, config: SampleDesignConfig,
                rng: np.random.Generator | None = None) -> Sample:
    """Draw one household sample; deterministic given config.seed (or rng)."""
    config.validate(population)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    p = household_inclusion_probabilities(population, config.n_households)
    selected = _systematic_pps(p, rng)
    if selected.shape[0] != config.n_households:
        raise DesignError(  # arises only if p sums away from n' numerically
            f"systematic selection returned {selected.shape[0]} households, "
            f"expected {config.n_households}")

    starts = population.household_person_start
    spans = [population.household_person_order[starts[h]:starts[h + 1]] for h in selected]
    person_rows = np.concatenate(spans)
    hh_index = np.repeat(np.arange(selected.shape[0], dtype=np.int64),
                         population.household_size[selected])
    hh_weight = 1.0 / p[selected]
    y = {name: population.study_values(name)[person_rows] for name in STUDY_VARIABLES}
    return Sample(
        person_id=population.person_id[person_rows],
        household_id=population.person_household[person_rows],
        domain_id=population.person_domain[person_rows],
        weight=hh_weight[hh_index],
        y=y,
        person_household_index=hh_index,
        sampled_household_id=population.household_id[selected],
        sampled_household_weight=hh_weight,
        n_domains=population.n_domains,
    )


def write_sample(sample: Sample, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAMPLE_HEADER)
        for i in range(sample.n_persons):
            writer.writerow([
                sample.person_id[i], sample.domain_id[i], sample.household_id[i],
                repr(float(sample.weight[i])),
                int(sample.y["unemployed"][i]), int(sample.y["employed"][i]),
            ])


def read_sample(path, n_domains: int) -> Sample:
    path = Path(path)
    pid, dom, hid, w, yu, ye = [], [], [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SAMPLE_HEADER:
            raise DesignError(f"{path}:1: expected header {','.join(SAMPLE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pid.append(int(row[0])); dom.append(int(row[1])); hid.append(int(row[2]))
                w.append(float(row[3])); yu.append(float(row[4])); ye.append(float(row[5]))
            except (ValueError, IndexError):
                raise DesignError(f"{path}:{lineno}: malformed sample row {row!r}") from None
    hid_arr = np.asarray(hid, dtype=np.int64)
    hh_ids, first = np.unique(hid_arr, return_index=True)
    hh_index = np.searchsorted(hh_ids, hid_arr)
    weight = np.asarray(w)
    return Sample(
        person_id=np.asarray(pid, dtype=np.int64),
        household_id=hid_arr,
        domain_id=np.asarray(dom, dtype=np.int64),
        weight=weight,
        y={"unemployed": np.asarray(yu), "employed": np.asarray(ye)},
        person_household_index=hh_index.astype(np.int64),
        sampled_household_id=hh_ids,
        sampled_household_weight=weight[first],
        n_domains=n_domains,
    )


# ---------------------------------------------------------------------------
# Pairwise inclusion probabilities
# ---------------------------------------------------------------------------

class IndependentPairwise:
    """Pairwise probabilities under the independence approximation.

    pi_kl = pi_k * pi_l for k != l, and pi_kk = pi_k.
    """

    mode = "independent-approximation"

    def __init__(self, pi: np.ndarray):
        self.pi = np.asarray(pi, dtype=np.float64)

    def first_order(self, idx=None) -> np.ndarray:
        return self.pi if idx is None else self.pi[idx]

    def pair_matrix(self, idx=None) -> np.ndarray:
        pi = self.first_order(idx)
        joint = np.outer(pi, pi)
        np.fill_diagonal(joint, pi)
        return joint


class EnumeratedDesign:
    """Exact first/second-order probabilities of an exhaustively listed design.

    Intended for tiny frames (a handful of units) where every possible sample
    and its probability can be enumerated, e.g. as an oracle for variance
    estimators.
    """

    mode = "exhaustive-tiny-design"

    def __init__(self, n_units: int, samples: list[np.ndarray],
                 probabilities: np.ndarray | None = None):
        if n_units > 12:
            raise DesignError("exhaustive enumeration is limited to tiny frames (<= 12 units)")
        self.n_units = n_units
        self.samples = [np.asarray(s, dtype=np.int64) for s in samples]
        if probabilities is None:
            probabilities = np.full(len(samples), 1.0 / len(samples))
        self.probabilities = np.asarray(probabilities, dtype=np.float64)
        if abs(self.probabilities.sum() - 1.0) > 1e-9:
            raise DesignError("sample probabilities must sum to 1")
        joint = np.zeros((n_units, n_units))
        for s, pr in zip(self.samples, self.probabilities):
            joint[np.ix_(s, s)] += pr
        self._joint = joint

    @classmethod
    def srswor(cls, n_units: int, n_sample: int) -> "EnumeratedDesign":
        samples = [np.asarray(c) for c in itertools.combinations(range(n_units), n_sample)]
        return cls(n_units, samples)

    def first_order(self, idx=None) -> np.ndarray:
        pi = np.diagonal(self._joint)
        return pi.copy() if idx is None else pi[idx]

    def pair_matrix(self, idx=None) -> np.ndarray:
        if idx is None:
            return self._joint.copy()
        idx = np.asarray(idx)
        return self._joint[np.ix_(idx, idx)]

    def iter_samples(self):
        return zip(self.samples, self.probabilities)
