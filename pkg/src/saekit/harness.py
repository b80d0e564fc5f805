"""Monte Carlo harness: repeated sample draws, all estimators, optimal pass.

Replicate r draws its sample from the stream (seed, 1, r) and its bootstrap
replicates from (seed, 2, r, b), so serial and parallel executions produce
identical results.  The oracle-optimal composite is a second pass over the
archived direct/synthetic estimates using the simulation-wide truths.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .composites import DELTA_GRID_DEFAULT, oracle_optimal_composite
from .pipeline import ESTIMATOR_TAGS, SampleEstimates, canonical_estimators, \
    compute_sample_estimates
from .population import STUDY_VARIABLES, DomainFrame, Population
from .sampling import SampleDesignConfig, draw_sample


@dataclass(frozen=True)
class SimConfig:
    replicates: int
    n_households: int
    bootstrap_b: int = 200
    estimators: tuple[str, ...] = ESTIMATOR_TAGS
    study_variables: tuple[str, ...] = STUDY_VARIABLES
    smooth_variances: bool = True
    seed: int = 0
    size_class_mode: str = "expected"
    jobs: int = 1
    delta_grid: tuple[float, float, float] = DELTA_GRID_DEFAULT

    def validate(self) -> None:
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.n_households < 1:
            raise ValueError("n_households must be >= 1")
        canonical_estimators(self.estimators)
        for name in self.study_variables:
            if name not in STUDY_VARIABLES:
                raise ValueError(f"unknown study variable {name!r}")
        if self.size_class_mode not in ("expected", "empirical"):
            raise ValueError("size_class_mode must be 'expected' or 'empirical'")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class ReplicateSet:
    """Stacked per-replicate results for one study variable."""

    study_variable: str
    n_domains: int
    n: np.ndarray                      # (R, M) realized sub-sample sizes
    theta: dict[str, np.ndarray]       # estimator tag -> (R, M)
    mse_u: dict[str, np.ndarray]
    mse_b: dict[str, np.ndarray]       # includes the model MSE for 'fh'
    lam: dict[str, np.ndarray]
    psi_s: np.ndarray                  # (R, M)
    sigma_v2: np.ndarray               # (R,)
    delta_star: np.ndarray             # (R,)
    boot_var_d: np.ndarray
    boot_var_s: np.ndarray
    boot_cov_ds: np.ndarray
    boot_var_s_all: np.ndarray
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_replicates(self) -> int:
        return self.n.shape[0]


def _replicate_estimates(population, frame, config: SimConfig, r: int) \
        -> dict[str, SampleEstimates]:
    rng = np.random.default_rng((config.seed, 1, r))
    sample = draw_sample(population,
                         SampleDesignConfig(n_households=config.n_households),
                         rng=rng)
    out = {}
    for variable in config.study_variables:
        out[variable] = compute_sample_estimates(
            frame, sample, variable,
            estimators=config.estimators,
            bootstrap_b=config.bootstrap_b,
            bootstrap_seed=(config.seed, 2, r),
            smooth_variances=config.smooth_variances,
            delta_grid=config.delta_grid)
    return out


_WORKER_STATE: dict = {}


def _worker_init(population, frame, config):
    _WORKER_STATE["args"] = (population, frame, config)


def _worker_run(r: int):
    population, frame, config = _WORKER_STATE["args"]
    return r, _replicate_estimates(population, frame, config, r)


def _new_set(variable: str, r_total: int, m: int, tags) -> ReplicateSet:
    def grid():
        return np.full((r_total, m), np.nan)

    theta = {t: grid() for t in tags}
    mse_u = {t: grid() for t in ("c", "ssd") if t in tags}
    mse_b = {t: grid() for t in ("fh", "c", "ssd", "opt") if t in tags}
    lam = {t: grid() for t in ("fh", "c", "ssd", "opt") if t in tags}
    return ReplicateSet(
        study_variable=variable, n_domains=m,
        n=np.zeros((r_total, m), dtype=np.int64),
        theta=theta, mse_u=mse_u, mse_b=mse_b, lam=lam,
        psi_s=grid(), sigma_v2=np.full(r_total, np.nan),
        delta_star=np.full(r_total, np.nan),
        boot_var_d=grid(), boot_var_s=grid(), boot_cov_ds=grid(),
        boot_var_s_all=grid())


def _store(rs: ReplicateSet, r: int, est: SampleEstimates) -> None:
    rs.n[r] = est.n
    if "direct" in rs.theta:
        rs.theta["direct"][r] = est.theta_d
    if est.psi_s is not None:
        rs.psi_s[r] = est.psi_s
    if "synthetic" in rs.theta and est.theta_syn is not None:
        rs.theta["synthetic"][r] = est.theta_syn
    if "fh" in rs.theta and est.theta_fh is not None:
        rs.theta["fh"][r] = est.theta_fh
        rs.lam["fh"][r] = est.gamma_fh
        rs.mse_b["fh"][r] = est.mse_fh
        rs.sigma_v2[r] = est.sigma_v2
    if "c" in rs.theta and est.theta_c is not None:
        rs.theta["c"][r] = est.theta_c
        rs.lam["c"][r] = est.lambda_c
        if est.mse_u_c is not None:
            rs.mse_u["c"][r] = est.mse_u_c
            rs.mse_b["c"][r] = est.mse_b_c
    if "ssd" in rs.theta and est.theta_ssd is not None:
        rs.theta["ssd"][r] = est.theta_ssd
        rs.lam["ssd"][r] = est.lambda_ssd
        rs.delta_star[r] = est.delta_star
        rs.mse_u["ssd"][r] = est.mse_u_ssd
        rs.mse_b["ssd"][r] = est.mse_b_ssd
    if est.boot_var_d is not None:
        rs.boot_var_d[r] = est.boot_var_d
        rs.boot_var_s[r] = est.boot_var_s
        rs.boot_cov_ds[r] = est.boot_cov_ds
        rs.boot_var_s_all[r] = est.boot_var_s_all
    for message in est.errors:
        rs.errors.append((r, message))


@dataclass
class SimulationResult:
    config: SimConfig
    frame: DomainFrame
    replicate_sets: dict[str, ReplicateSet]
    nbar: np.ndarray   # (M,) expected domain sample sizes (analytic mode)


def expected_domain_sample_sizes(population: Population, frame: DomainFrame,
                                 n_households: int) -> np.ndarray:
    """Analytic N_i * n / N with n the expected person sample size."""
    h = population.household_size.astype(np.float64)
    n_expected = n_households * float((h * h).sum()) / population.n_persons
    return frame.size * n_expected / population.n_persons


def run_simulation(population: Population, frame: DomainFrame,
                   config: SimConfig) -> SimulationResult:
    config.validate()
    tags = canonical_estimators(config.estimators)
    m = frame.n_domains
    r_total = config.replicates

    sets = {v: _new_set(v, r_total, m, tags) for v in config.study_variables}

    if config.jobs == 1:
        results = (( r, _replicate_estimates(population, frame, config, r))
                   for r in range(r_total))
        for r, per_variable in results:
            for variable, est in per_variable.items():
                _store(sets[variable], r, est)
    else:
        with ProcessPoolExecutor(max_workers=config.jobs, initializer=_worker_init,
                                 initargs=(population, frame, config)) as pool:
            for r, per_variable in pool.map(_worker_run, range(r_total),
                                            chunksize=max(1, r_total // (4 * config.jobs))):
                for variable, est in per_variable.items():
                    _store(sets[variable], r, est)

    if "opt" in tags:
        for variable, rs in sets.items():
            _optimal_pass(rs, frame.theta_true[variable])

    nbar = expected_domain_sample_sizes(population, frame, config.n_households)
    return SimulationResult(config=config, frame=frame, replicate_sets=sets, nbar=nbar)


def _optimal_pass(rs: ReplicateSet, truths: np.ndarray) -> None:
    """Second pass: oracle weights from the archive, applied per replicate."""
    d = rs.theta.get("direct")
    s = rs.theta.get("synthetic")
    if d is None or s is None or d.shape[0] < 2:
        return
    oracle = oracle_optimal_composite(d, s, truths)
    rs.theta["opt"] = oracle.theta
    rs.lam["opt"] = np.broadcast_to(oracle.lambda_star, d.shape).copy()
    lam = oracle.lambda_star
    one = 1.0 - lam
    var_comp = lam * lam * rs.boot_var_d + one * one * rs.boot_var_s \
        + 2.0 * lam * one * rs.boot_cov_ds
    var_comp = np.where(lam > 0.0, var_comp, rs.boot_var_s_all)
    rs.mse_b["opt"] = lam * one * rs.psi_s + var_comp
