"""Finite survey population: persons, households, domains, and true proportions.

CSV schemas:
    persons.csv     ``person_id,household_id,domain_id,labor_status`` with
                    labor_status in {U, E, N}
    covariates.csv  ``domain_id,z2,z3,z4,z5,z6`` (the leading covariate z1 == 1
                    is implicit)

True domain proportions are always recomputed from the microdata, never read
from a file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STATUS_LABELS = ("U", "E", "N")
STATUS_CODE = {label: code for code, label in enumerate(STATUS_LABELS)}
STUDY_VARIABLES = ("unemployed", "employed")
_STUDY_CODE = {"unemployed": 0, "employed": 1}

# Continuation probability of the truncated geometric household-size draw.
HOUSEHOLD_GEOMETRIC_Q = 0.55

# Five-number summary (min, Q1, median, Q3, max) anchoring the generated
# spread of true employed proportions.
EMPLOYED_QUANTILE_ANCHOR = (0.379, 0.585, 0.634, 0.668, 0.766)


class PopulationDataError(ValueError):
    """Raised when population input files or arrays violate the schema."""


@dataclass(frozen=True)
class Population:
    """Immutable person/household microdata for M non-overlapping domains.

    Person-level arrays are aligned with each other; household-level arrays
    are aligned with each other and indexed by ``person_household_index``.
    """

    person_id: np.ndarray            # (N,) int64
    person_household: np.ndarray     # (N,) int64, household ids
    person_domain: np.ndarray        # (N,) int64, domain ids in 1..M
    labor_status: np.ndarray         # (N,) int8 codes, 0=U 1=E 2=N
    household_id: np.ndarray         # (H,) int64
    household_domain: np.ndarray     # (H,) int64
    household_size: np.ndarray       # (H,) int64
    person_household_index: np.ndarray  # (N,) int64 into household arrays
    household_person_start: np.ndarray  # (H+1,) int64 CSR offsets
    household_person_order: np.ndarray  # (N,) int64 person rows grouped by household
    n_domains: int

    @property
    def n_persons(self) -> int:
        return self.person_id.shape[0]

    @property
    def n_households(self) -> int:
        return self.household_id.shape[0]

    def study_values(self, study_variable: str) -> np.ndarray:
        """Binary indicator array for one study variable."""
        return (self.labor_status == _STUDY_CODE[study_variable]).astype(np.float64)

    def domain_sizes(self) -> np.ndarray:
        return np.bincount(self.person_domain - 1, minlength=self.n_domains).astype(np.int64)


@dataclass(frozen=True)
class DomainFrame:
    """Per-domain sizes, covariates (leading column of ones) and truths."""

    domain_id: np.ndarray            # (M,) int64, 1..M
    size: np.ndarray                 # (M,) int64
    covariates: np.ndarray           # (M, P) float64, covariates[:, 0] == 1
    theta_true: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_domains(self) -> int:
        return self.domain_id.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]


def _assemble_population(person_id, person_household, person_domain, status_code,
                         n_domains) -> Population:
    person_id = np.asarray(person_id, dtype=np.int64)
    person_household = np.asarray(person_household, dtype=np.int64)
    person_domain = np.asarray(person_domain, dtype=np.int64)
    status_code = np.asarray(status_code, dtype=np.int8)

    if person_id.size == 0:
        raise PopulationDataError("population has no persons")
    uniq, counts = np.unique(person_id, return_counts=True)
    if np.any(counts > 1):
        raise PopulationDataError(f"duplicate person_id values: {uniq[counts > 1][:10].tolist()}")
    if np.any((person_domain < 1) | (person_domain > n_domains)):
        bad = np.unique(person_domain[(person_domain < 1) | (person_domain > n_domains)])
        raise PopulationDataError(f"person domain ids outside 1..{n_domains}: {bad[:10].tolist()}")

    hh_ids, hh_index = np.unique(person_household, return_inverse=True)
    hh_size = np.bincount(hh_index).astype(np.int64)
    order = np.argsort(hh_index, kind="stable")
    starts = np.zeros(hh_ids.shape[0] + 1, dtype=np.int64)
    np.cumsum(hh_size, out=starts[1:])
    hh_domain = person_domain[order[starts[:-1]]]
    if np.any(person_domain != hh_domain[hh_index]):
        mixed = np.unique(hh_ids[np.flatnonzero(
            np.bincount(hh_index, weights=(person_domain != hh_domain[hh_index]).astype(float)) > 0)])
        raise PopulationDataError(f"households spanning multiple domains: {mixed[:10].tolist()}")

    domain_counts = np.bincount(person_domain - 1, minlength=n_domains)
    if np.any(domain_counts == 0):
        empty = np.flatnonzero(domain_counts == 0) + 1
        raise PopulationDataError(f"domains with no persons: {empty[:10].tolist()}")

    return Population(
        person_id=person_id,
        person_household=person_household,
        person_domain=person_domain,
        labor_status=status_code,
        household_id=hh_ids.astype(np.int64),
        household_domain=hh_domain.astype(np.int64),
        household_size=hh_size,
        person_household_index=hh_index.astype(np.int64),
        household_person_start=starts,
        household_person_order=order.astype(np.int64),
        n_domains=int(n_domains),
    )


def domain_truths(population: Population) -> dict[str, np.ndarray]:
    """Exact finite-population proportions of each study variable per domain."""
    dom = population.person_domain - 1
    sizes = np.bincount(dom, minlength=population.n_domains)
    if np.any(sizes == 0):
        raise PopulationDataError("domain_truths requires non-empty domains")
    out = {}
    for name in STUDY_VARIABLES:
        y = population.study_values(name)
        out[name] = np.bincount(dom, weights=y, minlength=population.n_domains) / sizes
    return out


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------

PERSON_HEADER = ["person_id", "household_id", "domain_id", "labor_status"]
COVARIATE_HEADER = ["domain_id", "z2", "z3", "z4", "z5", "z6"]


def _fail(path, line, message):
    raise PopulationDataError(f"{path}:{line}: {message}")


def _read_covariates(covariate_file) -> tuple[np.ndarray, np.ndarray]:
    path = Path(covariate_file)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != COVARIATE_HEADER:
            _fail(path, 1, f"expected header {','.join(COVARIATE_HEADER)}")
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COVARIATE_HEADER):
                _fail(path, lineno, f"expected {len(COVARIATE_HEADER)} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
            except ValueError:
                _fail(path, lineno, f"domain_id is not an integer: {row[0]!r}")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                _fail(path, lineno, f"non-numeric covariate in row: {row[1:]!r}")
            if any(not (0.0 <= v <= 1.0) for v in values):
                _fail(path, lineno, f"covariate proportions outside [0, 1]: {values!r}")
            rows.append(values)
    if not ids:
        raise PopulationDataError(f"{path}: no covariate rows")
    id_arr = np.asarray(ids, dtype=np.int64)
    if np.unique(id_arr).size != id_arr.size:
        raise PopulationDataError(f"{path}: duplicate domain_id rows")
    m = id_arr.size
    if sorted(ids) != list(range(1, m + 1)):
        raise PopulationDataError(f"{path}: domain ids must be exactly 1..{m}")
    z = np.ones((m, len(COVARIATE_HEADER)), dtype=np.float64)
    z[id_arr - 1, 1:] = np.asarray(rows, dtype=np.float64)
    return np.arange(1, m + 1, dtype=np.int64), z


def load_population(person_file, covariate_file) -> tuple[Population, DomainFrame]:
    """Load and validate microdata plus domain covariates; recompute truths."""
    domain_ids, z = _read_covariates(covariate_file)
    m = domain_ids.size

    path = Path(person_file)
    pid, hid, dom, code = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PERSON_HEADER:
            _fail(path, 1, f"expected header {','.join(PERSON_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PERSON_HEADER):
                _fail(path, lineno, f"expected {len(PERSON_HEADER)} fields, got {len(row)}")
            try:
                pid.append(int(row[0]))
                hid.append(int(row[1]))
                dom.append(int(row[2]))
            except ValueError:
                _fail(path, lineno, f"non-integer identifier in row: {row[:3]!r}")
            status = row[3].strip()
            if status not in STATUS_CODE:
                _fail(path, lineno, f"labor_status must be one of U/E/N, got {status!r}")
            code.append(STATUS_CODE[status])
            if dom[-1] < 1 or dom[-1] > m:
                _fail(path, lineno, f"domain_id {dom[-1]} has no covariate row")

    population = _assemble_population(pid, hid, dom, code, m)
    frame = DomainFrame(domain_id=domain_ids, size=population.domain_sizes(),
                        covariates=z, theta_true=domain_truths(population))
    return population, frame


def write_population(population: Population, frame: DomainFrame,
                     person_file, covariate_file) -> None:
    """Write the persons.csv / covariates.csv pair (exact float round-trip)."""
    with open(person_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PERSON_HEADER)
        for i in range(population.n_persons):
            writer.writerow([
                population.person_id[i],
                population.person_household[i],
                population.person_domain[i],
                STATUS_LABELS[population.labor_status[i]],
            ])
    with open(covariate_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COVARIATE_HEADER)
        for i in range(frame.n_domains):
            writer.writerow([frame.domain_id[i]]
                            + [repr(float(v)) for v in frame.covariates[i, 1:]])


# ---------------------------------------------------------------------------
# Synthetic population generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic Labor-Force-Survey style population.

    ``covariate_correlation`` controls how strongly the informative domain
    covariates track the true proportions (0 = independent).  Household sizes
    follow a geometric distribution truncated to 1..household_size_max.
    ``domain_size_spread`` bounds the max/min ratio of domain sizes.
    """

    m_domains: int = 30
    population_size: int = 50_000
    household_size_max: int = 6
    unemployed_range: tuple[float, float] = (0.01, 0.10)
    employed_range: tuple[float, float] = (0.379, 0.766)
    covariate_correlation: float = 0.85
    min_unemployed_fraction: float = 0.0
    domain_size_spread: float = 3.0
    seed: int = 0

    def validate(self) -> None:
        if self.m_domains < 1:
            raise PopulationDataError("m_domains must be >= 1")
        if self.population_size < 20 * self.m_domains:
            raise PopulationDataError("population_size too small for the domain count")
        if self.household_size_max < 1:
            raise PopulationDataError("household_size_max must be >= 1")
        for name, (lo, hi) in (("unemployed_range", self.unemployed_range),
                               ("employed_range", self.employed_range)):
            if not (0.0 <= lo < hi <= 1.0):
                raise PopulationDataError(f"{name} must satisfy 0 <= lo < hi <= 1, got {(lo, hi)}")
        lo_u = max(self.unemployed_range[0], self.min_unemployed_fraction)
        if lo_u >= self.unemployed_range[1]:
            raise PopulationDataError("min_unemployed_fraction leaves an empty unemployed_range")
        if self.unemployed_range[1] + self.employed_range[1] > 1.0:
            raise PopulationDataError(
                "upper bounds of unemployed_range and employed_range must sum to at most 1")
        if not (0.0 <= self.covariate_correlation <= 1.0):
            raise PopulationDataError("covariate_correlation must lie in [0, 1]")
        if self.domain_size_spread < 1.0:
            raise PopulationDataError("domain_size_spread must be >= 1")


def _rounded_partition(weights: np.ndarray, total: int, minimum: int) -> np.ndarray:
    """Integer sizes proportional to weights, summing to total exactly."""
    if minimum * weights.size > total:
        raise PopulationDataError("infeasible generator config: population too small "
                                  f"for {weights.size} domains of at least {minimum} persons")
    raw = weights / weights.sum() * total
    sizes = np.maximum(np.floor(raw).astype(np.int64), minimum)
    # Largest-remainder correction toward the exact total.
    while sizes.sum() != total:
        if sizes.sum() < total:
            sizes[np.argmax(raw - sizes)] += 1
        else:
            adjustable = sizes > minimum
            idx = np.flatnonzero(adjustable)
            sizes[idx[np.argmin((raw - sizes)[idx])]] -= 1
    return sizes


def _stratified_uniform(rng: np.random.Generator, m: int) -> np.ndarray:
    """One draw per 1/m stratum, in shuffled order (stable quantile spread)."""
    return (rng.permutation(m) + rng.random(m)) / m


def _household_sizes(rng: np.random.Generator, n_persons: int, size_max: int) -> np.ndarray:
    support = np.arange(1, size_max + 1)
    pmf = HOUSEHOLD_GEOMETRIC_Q ** (support - 1)
    pmf /= pmf.sum()
    sizes = rng.choice(support, size=n_persons, p=pmf)
    totals = np.cumsum(sizes)
    cut = int(np.searchsorted(totals, n_persons))
    sizes = sizes[:cut + 1].copy()
    sizes[cut] -= int(totals[cut]) - n_persons
    if sizes[cut] == 0:
        sizes = sizes[:cut]
    return sizes.astype(np.int64)


def _correlated_covariate(rng, standardized, mean, scale, strength):
    noise = rng.standard_normal(standardized.shape[0])
    mix = strength * standardized + math.sqrt(max(0.0, 1.0 - strength ** 2)) * noise
    return np.clip(mean + scale * mix, 0.0, 1.0)


def _zscore(values: np.ndarray) -> np.ndarray:
    sd = values.std()
    if sd == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / sd


def generate_synthetic_population(config: GeneratorConfig,
                                  seed: int | None = None) -> tuple[Population, DomainFrame]:
    """Generate a labeled population with correlated domain covariates.

    Deterministic given the seed.  True unemployed proportions land inside
    ``unemployed_range`` (floored by ``min_unemployed_fraction``); employed
    proportions follow a piecewise-linear quantile curve anchored at
    ``EMPLOYED_QUANTILE_ANCHOR`` rescaled into ``employed_range``.
    """
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    m = config.m_domains
    total = config.population_size

    half_log = 0.5 * math.log(config.domain_size_spread)
    size_factor = np.exp(rng.uniform(-half_log, half_log, size=m))
    min_size = max(20, 2 * config.household_size_max)
    sizes = _rounded_partition(size_factor, total, min_size)

    lo_u = max(config.unemployed_range[0], config.min_unemployed_fraction)
    hi_u = config.unemployed_range[1]
    theta_u_target = lo_u + _stratified_uniform(rng, m) * (hi_u - lo_u)

    anchor = np.asarray(EMPLOYED_QUANTILE_ANCHOR)
    lo_e, hi_e = config.employed_range
    curve = lo_e + (anchor - anchor[0]) / (anchor[-1] - anchor[0]) * (hi_e - lo_e)
    theta_e_target = np.interp(_stratified_uniform(rng, m), [0.0, 0.25, 0.5, 0.75, 1.0], curve)
    theta_e_target = np.minimum(theta_e_target, 0.98 - theta_u_target)

    count_u = np.round(theta_u_target * sizes).astype(np.int64)
    count_u = np.clip(count_u, np.ceil(lo_u * sizes).astype(np.int64),
                      np.floor(hi_u * sizes).astype(np.int64))
    count_e = np.round(theta_e_target * sizes).astype(np.int64)
    count_e = np.clip(count_e, np.ceil(lo_e * sizes).astype(np.int64),
                      np.floor(hi_e * sizes).astype(np.int64))
    if np.any(count_u > np.floor(hi_u * sizes)) or np.any(count_u + count_e > sizes):
        raise PopulationDataError("infeasible generator config: domain counts exceed sizes")

    person_domain = np.repeat(np.arange(1, m + 1, dtype=np.int64), sizes)
    status = np.empty(total, dtype=np.int8)
    person_household = np.empty(total, dtype=np.int64)
    offset = 0
    next_household = 1
    for i in range(m):
        n_i = int(sizes[i])
        codes = np.full(n_i, STATUS_CODE["N"], dtype=np.int8)
        codes[:count_u[i]] = STATUS_CODE["U"]
        codes[count_u[i]:count_u[i] + count_e[i]] = STATUS_CODE["E"]
        status[offset:offset + n_i] = rng.permutation(codes)
        hh_sizes = _household_sizes(rng, n_i, config.household_size_max)
        ids = np.arange(next_household, next_household + hh_sizes.size, dtype=np.int64)
        person_household[offset:offset + n_i] = np.repeat(ids, hh_sizes)
        next_household += hh_sizes.size
        offset += n_i

    population = _assemble_population(
        np.arange(1, total + 1, dtype=np.int64), person_household, person_domain, status, m)
    truths = domain_truths(population)

    rho = config.covariate_correlation
    weak = 0.3 * rho
    t_u = _zscore(truths["unemployed"])
    t_e = _zscore(truths["employed"])
    scale_u = 1.2 * max(truths["unemployed"].std(), 0.005)
    scale_e = 1.2 * max(truths["employed"].std(), 0.01)
    z = np.ones((m, 6))
    z[:, 1] = _correlated_covariate(rng, t_u, truths["unemployed"].mean() + 0.01, scale_u, rho)
    z[:, 2] = _correlated_covariate(rng, t_e, truths["employed"].mean(), scale_e, rho)
    z[:, 3] = _correlated_covariate(rng, t_e, 0.47, 0.02, weak)
    z[:, 4] = _correlated_covariate(rng, t_e, 0.21, 0.02, weak)
    z[:, 5] = _correlated_covariate(rng, t_u, 0.21, 0.02, weak)

    frame = DomainFrame(domain_id=np.arange(1, m + 1, dtype=np.int64),
                        size=sizes, covariates=z, theta_true=truths)
    return population, frame
