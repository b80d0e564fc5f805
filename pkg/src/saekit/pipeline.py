"""Single-sample estimation sweep: every estimator and MSE estimator at once.

Within bootstrap replicates the variance estimates (direct, smoothed,
combined), the regression weights derived from them and the composition
weights are held at their full-sample values; only the weighted direct
estimates and the regression fit are recomputed under replicate weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .areamodels import ModelError, MomentConvergenceError, eblup_mse, fh_fit, gls_beta
from .bootstrap import BootstrapConfig, make_replicate_weights
from .composites import (
    DELTA_GRID_DEFAULT,
    CompositeInputs,
    adaptive_ssd,
    variance_ratio_composite,
)
from .direct import domain_direct_estimates
from .sampling import Sample
from .smoothing import SmoothingError, combine_variances, gvf_fit, gvf_predict

ESTIMATOR_TAGS = ("direct", "synthetic", "fh", "c", "ssd", "opt")

_NEEDS_SMOOTHING = {"synthetic", "fh", "c", "ssd", "opt"}
_NEEDS_BOOTSTRAP = {"c", "ssd", "opt"}


def canonical_estimators(estimators) -> tuple[str, ...]:
    tags = [e.strip().lower() for e in estimators]
    unknown = [t for t in tags if t not in ESTIMATOR_TAGS]
    if unknown:
        raise ValueError(f"unknown estimators {unknown}; choose from {ESTIMATOR_TAGS}")
    chosen = set(tags)
    if chosen & {"ssd", "opt"}:
        chosen.add("synthetic")
    chosen.add("direct")
    return tuple(t for t in ESTIMATOR_TAGS if t in chosen)


@dataclass
class SampleEstimates:
    """All per-domain estimates from one sample; NaN marks unavailable cells."""

    study_variable: str
    n_domains: int
    n: np.ndarray
    n_hat: np.ndarray
    theta_d: np.ndarray
    psi_d: np.ndarray
    psi_s: np.ndarray | None = None
    psi_c: np.ndarray | None = None
    theta_syn: np.ndarray | None = None
    theta_syn_combined: np.ndarray | None = None
    theta_fh: np.ndarray | None = None
    gamma_fh: np.ndarray | None = None
    sigma_v2: float = np.nan
    mse_fh: np.ndarray | None = None
    theta_c: np.ndarray | None = None
    lambda_c: np.ndarray | None = None
    mse_u_c: np.ndarray | None = None
    mse_b_c: np.ndarray | None = None
    theta_ssd: np.ndarray | None = None
    lambda_ssd: np.ndarray | None = None
    delta_star: float = np.nan
    mse_u_ssd: np.ndarray | None = None
    mse_b_ssd: np.ndarray | None = None
    boot_var_d: np.ndarray | None = None
    boot_var_s: np.ndarray | None = None
    boot_cov_ds: np.ndarray | None = None
    boot_var_s_all: np.ndarray | None = None
    boot_excluded: np.ndarray | None = None
    errors: list[str] = field(default_factory=list)

    def _nan(self):
        return np.full(self.n_domains, np.nan)


def _matched_moments(dstar: np.ndarray, sstar: np.ndarray):
    """Bootstrap moments over replicates where both series are defined."""
    valid = ~np.isnan(dstar) & ~np.isnan(sstar)
    count = valid.sum(axis=0).astype(np.float64)
    d = np.where(valid, dstar, 0.0)
    s = np.where(valid, sstar, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        dbar = d.sum(axis=0) / count
        sbar = s.sum(axis=0) / count
        dc = np.where(valid, dstar - dbar, 0.0)
        sc = np.where(valid, sstar - sbar, 0.0)
        var_d = (dc * dc).sum(axis=0) / count
        var_s = (sc * sc).sum(axis=0) / count
        cov = (dc * sc).sum(axis=0) / count
    return var_d, var_s, cov, count.astype(np.int64)


def _series_variance(values: np.ndarray) -> np.ndarray:
    valid = ~np.isnan(values)
    count = valid.sum(axis=0).astype(np.float64)
    v = np.where(valid, values, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = v.sum(axis=0) / count
        vc = np.where(valid, values - mean, 0.0)
        return (vc * vc).sum(axis=0) / count


def _bootstrap_synthetic(z, theta_star, v, eligible) -> np.ndarray:
    """Regression predictions per bootstrap replicate, weights 1/v held fixed.

    The fit of replicate b runs over eligible domains whose replicate direct
    estimate exists; rows that leave fewer usable domains than covariates get
    NaN predictions.
    """
    n_rep, m = theta_star.shape
    p = z.shape[1]
    preds = np.full((n_rep, m), np.nan)
    z_in = z[eligible]
    v_in = v[eligible]
    valid = ~np.isnan(theta_star[:, eligible])
    full = valid.all(axis=1)
    if np.any(full):
        zw = z_in / v_in[:, None]
        normal = zw.T @ z_in
        rhs = zw.T @ theta_star[full][:, eligible].T
        beta = np.linalg.solve(normal, rhs)
        preds[full] = (z @ beta).T
    for b in np.flatnonzero(~full):
        mask = eligible & ~np.isnan(theta_star[b])
        if mask.sum() > p:
            beta_b = gls_beta(z[mask], theta_star[b][mask], v[mask])
            preds[b] = z @ beta_b
    return preds


def _composition_pieces(lam, theta_d, theta_syn, var_d, var_s, cov, var_s_all, psi_b):
    """Difference-based and composition-based MSE estimates at fixed weights."""
    one = 1.0 - lam
    var_diff = var_d + var_s - 2.0 * cov
    var_comp = lam * lam * var_d + one * one * var_s + 2.0 * lam * one * cov
    var_comp = np.where(lam > 0.0, var_comp, var_s_all)
    diff = lam * theta_d + one * theta_syn - theta_d
    mse_u = diff * diff - one * one * var_diff + var_comp
    mse_b = lam * one * psi_b + var_comp
    return mse_u, mse_b, var_comp


def compute_sample_estimates(frame, sample: Sample, study_variable: str, *,
                             estimators=ESTIMATOR_TAGS, bootstrap_b: int = 200,
                             bootstrap_seed: int | tuple = 0,
                             smooth_variances: bool = True,
                             delta_grid=DELTA_GRID_DEFAULT) -> SampleEstimates:
    """Run every requested estimator on one drawn sample."""
    tags = canonical_estimators(estimators)
    m = frame.n_domains
    z = frame.covariates

    direct = domain_direct_estimates(sample, study_variable)
    out = SampleEstimates(
        study_variable=study_variable, n_domains=m, n=direct.n,
        n_hat=direct.n_hat, theta_d=direct.theta, psi_d=direct.psi)
    if not (set(tags) & _NEEDS_SMOOTHING):
        return out

    observed = direct.n > 0
    psi_d_filled = np.where(observed, direct.psi, 0.0)

    if smooth_variances:
        try:
            fit = gvf_fit(frame.size, direct.psi)
            psi_work = gvf_predict(fit, frame.size)
        except SmoothingError as exc:
            out.errors.append(f"smoothing: {exc}")
            return out
    else:
        psi_work = psi_d_filled.copy()
    out.psi_s = psi_work

    # Domains usable in model fits: a direct estimate and a positive variance.
    fit_mask = observed & (psi_work > 0.0)
    if fit_mask.sum() <= z.shape[1]:
        out.errors.append(f"models: only {int(fit_mask.sum())} usable domains "
                          f"for {z.shape[1]} covariates")
        return out

    theta_syn = None
    if set(tags) & {"synthetic", "ssd", "opt"}:
        try:
            beta_s = gls_beta(z[fit_mask], direct.theta[fit_mask], psi_work[fit_mask])
            theta_syn = z @ beta_s
            out.theta_syn = theta_syn
        except ModelError as exc:
            out.errors.append(f"synthetic: {exc}")

    triple = None
    theta_syn_c = None
    if "c" in tags and smooth_variances:
        try:
            triple = combine_variances(psi_work, psi_d_filled)
            beta_c = gls_beta(z[fit_mask], direct.theta[fit_mask], triple.psi_c[fit_mask])
            theta_syn_c = z @ beta_c
            out.psi_c = triple.psi_c
            out.theta_syn_combined = theta_syn_c
            out.theta_c, out.lambda_c = variance_ratio_composite(
                direct.theta, theta_syn_c, triple)
        except (ModelError, SmoothingError) as exc:
            out.errors.append(f"composite-c: {exc}")
            triple = None
    elif "c" in tags:
        out.errors.append("composite-c: requires variance smoothing")

    if "fh" in tags:
        try:
            fh = fh_fit(z[fit_mask], direct.theta[fit_mask], psi_work[fit_mask])
            gamma = np.zeros(m)
            gamma[fit_mask] = fh.gamma
            synthetic_part = z @ fh.beta
            out.gamma_fh = gamma
            out.sigma_v2 = fh.sigma_v2
            out.theta_fh = gamma * np.where(observed, direct.theta, 0.0) \
                + (1.0 - gamma) * synthetic_part
            out.mse_fh = eblup_mse(z[fit_mask], psi_work[fit_mask], fh.sigma_v2,
                                   z_out=z, psi_out=psi_work)
        except (ModelError, MomentConvergenceError) as exc:
            out.errors.append(f"fh: {exc}")

    if not (set(tags) & _NEEDS_BOOTSTRAP):
        return out

    # Bootstrap: recompute direct estimates and regression fits per replicate.
    try:
        weights = make_replicate_weights(
            sample, BootstrapConfig(b_replicates=bootstrap_b, seed=bootstrap_seed))
    except ValueError as exc:
        out.errors.append(f"bootstrap: {exc}")
        return out

    dom = sample.domain_id - 1
    y = sample.y[study_variable]
    sum_w, sum_wy = kernels.bootstrap_domain_totals(
        y, sample.weight, dom, sample.person_household_index,
        weights.multiplicities, weights.factor, m)
    theta_d_star = np.full(sum_w.shape, np.nan)
    np.divide(sum_wy, sum_w, out=theta_d_star, where=sum_w > 0.0)

    excluded = (np.isnan(theta_d_star) & observed).sum(axis=0)
    out.boot_excluded = excluded.astype(np.int64)
    over_limit = observed & (excluded > 0.2 * bootstrap_b)
    if np.any(over_limit):
        bad = frame.domain_id[over_limit]
        out.errors.append(f"bootstrap: domains {bad.tolist()} emptied in more "
                          f"than 20% of replicates")

    if theta_syn is not None:
        syn_star = _bootstrap_synthetic(z, theta_d_star, psi_work, fit_mask)
        var_d, var_s, cov, _ = _matched_moments(theta_d_star, syn_star)
        var_s_all = _series_variance(syn_star)
        out.boot_var_d, out.boot_var_s, out.boot_cov_ds = var_d, var_s, cov
        out.boot_var_s_all = var_s_all

        if "ssd" in tags:
            inputs = CompositeInputs(
                theta_d=direct.theta, theta_syn=theta_syn,
                n_hat=direct.n_hat, n_domain=frame.size,
                var_d=var_d, var_s=var_s, cov_ds=cov, risk_exclude=over_limit)
            try:
                solution = adaptive_ssd(inputs, grid=delta_grid)
                out.theta_ssd = solution.theta
                out.lambda_ssd = solution.lam
                out.delta_star = solution.delta_star
                mse_u, mse_b, _ = _composition_pieces(
                    solution.lam, direct.theta, theta_syn,
                    var_d, var_s, cov, var_s_all, psi_work)
                out.mse_u_ssd = mse_u
                out.mse_b_ssd = mse_b
            except ValueError as exc:
                out.errors.append(f"ssd: {exc}")

    if triple is not None and theta_syn_c is not None:
        syn_c_star = _bootstrap_synthetic(z, theta_d_star, triple.psi_c, fit_mask)
        var_d_c, var_s_c, cov_c, _ = _matched_moments(theta_d_star, syn_c_star)
        var_s_all_c = _series_variance(syn_c_star)
        mse_u, mse_b, _ = _composition_pieces(
            out.lambda_c, direct.theta, theta_syn_c,
            var_d_c, var_s_c, cov_c, var_s_all_c, psi_work)
        out.mse_u_c = mse_u
        out.mse_b_c = mse_b

    return out
