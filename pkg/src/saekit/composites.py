"""Design-based composite estimators and their MSE estimators.

A composite is lambda*direct + (1-lambda)*synthetic.  Three weights live
here: the variance-ratio weight min(psi_s, psi_d)/max(psi_s, psi_d), the
sample-size-dependent (SSD) weight driven by N_hat/N relative to delta, and
the oracle optimal weight computed from Monte Carlo mean squared errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .smoothing import VarianceTriple

DELTA_GRID_DEFAULT = (0.25, 10.0, 0.25)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def linear_combination(lam, theta_d, theta_syn):
    """Convex combination lambda*direct + (1-lambda)*synthetic."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError("composition weight must lie in [0, 1]")
    return lam * theta_d + (1.0 - lam) * theta_syn


def optimal_lambda(mse_d: float, mse_s: float, c: float = 0.0) -> float:
    """Weight minimizing the composite MSE: (mse_s - c) / (mse_d + mse_s - 2c)."""
    denominator = mse_d + mse_s - 2.0 * c
    if denominator <= 0.0:
        raise ValueError(f"degenerate MSE inputs: mse_d + mse_s - 2c = {denominator:.3g} <= 0")
    return (mse_s - c) / denominator


def ssd_weight(n_hat, n_domain, delta):
    """Sample-size-dependent weight: 1 if N_hat/N >= delta, else N_hat/(delta*N)."""
    if np.any(np.asarray(delta) <= 0.0):
        raise ValueError("delta must be positive")
    ratio = np.asarray(n_hat, dtype=np.float64) / np.asarray(n_domain, dtype=np.float64)
    return np.minimum(ratio / delta, 1.0)


def variance_ratio_composite(theta_d, theta_syn, triple: VarianceTriple):
    """Composite with lambda = min(psi_s, psi_d)/max(psi_s, psi_d).

    Domains whose direct estimate is missing (NaN) fall back to the
    synthetic value; their combined variance already forces lambda = 0.
    """
    theta_d = np.asarray(theta_d, dtype=np.float64)
    theta_syn = np.asarray(theta_syn, dtype=np.float64)
    lam = triple.lambda_ratio
    theta = linear_combination(lam, np.where(np.isnan(theta_d), 0.0, theta_d), theta_syn)
    missing = np.isnan(theta_d) & (lam == 0.0)
    theta = np.where(missing, theta_syn, theta)
    return theta, lam


def mse_difference(theta_target, theta_d, var_diff, var_target):
    """Difference-based MSE estimate (target - direct)^2 - var_diff + var_target.

    Approximately design unbiased for synthetic-style targets; the raw signed
    value is returned, so individual estimates can be negative.
    """
    d = np.asarray(theta_target, dtype=np.float64) - np.asarray(theta_d, dtype=np.float64)
    return d * d - np.asarray(var_diff, dtype=np.float64) + np.asarray(var_target, dtype=np.float64)


def mse_composition(lam, psi, var_target):
    """Non-negative MSE estimate lambda*(1-lambda)*psi + var_target."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError("composition weight must lie in [0, 1]")
    return lam * (1.0 - lam) * np.asarray(psi, dtype=np.float64) \
        + np.asarray(var_target, dtype=np.float64)


# ---------------------------------------------------------------------------
# Adaptive SSD estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompositeInputs:
    """Per-domain ingredients shared by the SSD risk search.

    Bootstrap second moments are matched over replicates where the direct
    estimate exists: var_d, var_s and cov_ds describe (direct, synthetic).
    Domains with a missing direct estimate carry NaN and are skipped by the
    risk average, as are domains flagged in ``risk_exclude``.
    """

    theta_d: np.ndarray
    theta_syn: np.ndarray
    n_hat: np.ndarray
    n_domain: np.ndarray
    var_d: np.ndarray
    var_s: np.ndarray
    cov_ds: np.ndarray
    risk_exclude: np.ndarray | None = None

    def lambda_at(self, delta: float) -> np.ndarray:
        return ssd_weight(self.n_hat, self.n_domain, delta)

    def mse_difference_at(self, lam: np.ndarray) -> np.ndarray:
        one = 1.0 - lam
        diff = one * (self.theta_syn - self.theta_d)
        var_diff = self.var_d + self.var_s - 2.0 * self.cov_ds
        var_comp = lam * lam * self.var_d + one * one * self.var_s \
            + 2.0 * lam * one * self.cov_ds
        return diff * diff - one * one * var_diff + var_comp


def risk_curve(inputs: CompositeInputs, deltas) -> np.ndarray:
    """Average difference-based MSE estimate of the SSD composite per delta."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size == 0:
        raise ValueError("empty delta grid")
    defined = ~np.isnan(inputs.theta_d) & ~np.isnan(inputs.var_d)
    if inputs.risk_exclude is not None:
        defined &= ~inputs.risk_exclude
    if not np.any(defined):
        raise ValueError("risk curve needs at least one domain with a direct estimate")
    values = np.empty(deltas.size)
    for i, delta in enumerate(deltas):
        per_domain = inputs.mse_difference_at(inputs.lambda_at(float(delta)))
        values[i] = per_domain[defined].mean()
    return values


def _golden_section(f, lo: float, hi: float, tol: float):
    """Golden-section minimization; returns all evaluated (x, f(x)) pairs."""
    evaluations = []

    def probe(x):
        fx = f(x)
        evaluations.append((x, fx))
        return fx

    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = probe(c), probe(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = probe(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = probe(d)
    return evaluations


@dataclass(frozen=True)
class SsdSolution:
    delta_star: float
    risk_deltas: np.ndarray
    risk_values: np.ndarray
    lam: np.ndarray
    theta: np.ndarray


def adaptive_ssd(inputs: CompositeInputs, grid=DELTA_GRID_DEFAULT,
                 tol: float = 1e-3) -> SsdSolution:
    """Pick delta minimizing the risk curve: coarse grid, then golden section.

    Ties are broken toward the smallest delta, so a flat curve returns the
    first grid point.
    """
    start, stop, step = grid
    deltas = np.arange(start, stop + 0.5 * step, step)
    values = risk_curve(inputs, deltas)
    pairs = list(zip(deltas.tolist(), values.tolist()))

    best_idx = int(np.argmin(values))  # argmin takes the first (smallest delta) on ties
    if not np.all(values == values[best_idx]):
        lo = deltas[max(best_idx - 1, 0)]
        hi = deltas[min(best_idx + 1, deltas.size - 1)]
        refine = _golden_section(lambda x: float(risk_curve(inputs, [x])[0]),
                                 float(lo), float(hi), tol)
        pairs.extend(refine)

    best_delta, best_value = pairs[0]
    for delta, value in pairs[1:]:
        if value < best_value or (value == best_value and delta < best_delta):
            best_delta, best_value = delta, value

    lam = inputs.lambda_at(best_delta)
    theta = lam * np.where(np.isnan(inputs.theta_d), 0.0, inputs.theta_d) \
        + (1.0 - lam) * inputs.theta_syn
    theta = np.where(np.isnan(inputs.theta_d) & (lam == 0.0), inputs.theta_syn, theta)
    all_deltas = np.asarray([p[0] for p in pairs])
    all_values = np.asarray([p[1] for p in pairs])
    return SsdSolution(delta_star=float(best_delta), risk_deltas=all_deltas,
                       risk_values=all_values, lam=lam, theta=theta)


# ---------------------------------------------------------------------------
# Oracle optimal composition over a Monte Carlo archive
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleComposite:
    lambda_star: np.ndarray   # (M,)
    theta: np.ndarray         # (R, M) per-replicate optimal composites
    mse_d: np.ndarray         # (M,) Monte Carlo MSE of the direct estimator
    mse_s: np.ndarray         # (M,) Monte Carlo MSE of the synthetic estimator
    covariance: np.ndarray    # (M,) Monte Carlo error covariance


def oracle_optimal_composite(theta_d_archive, theta_s_archive, truths,
                             use_covariance: bool = True) -> OracleComposite:
    """Optimal per-domain weights from a replicate archive, applied per replicate.

    MSEs and the error covariance are Monte Carlo averages over replicates
    (rows); replicates with a missing direct estimate are skipped per domain.
    A degenerate weight denominator yields the tie value 1/2 when the two
    estimators have identical MSE and NaN otherwise.  Weights are clipped
    into [0, 1], the admissible composition range.
    """
    d = np.asarray(theta_d_archive, dtype=np.float64)
    s = np.asarray(theta_s_archive, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if d.ndim != 2 or d.shape != s.shape:
        raise ValueError("archives must be matching (R, M) arrays")
    if d.shape[0] < 2:
        raise ValueError("optimal weights need an archive with at least 2 replicates")

    err_d = d - truths
    err_s = s - truths
    valid = ~np.isnan(err_d)
    with np.errstate(invalid="ignore"):
        mse_d = np.nanmean(err_d * err_d, axis=0)
        mse_s = np.where(valid, err_s * err_s, np.nan)
        mse_s = np.nanmean(mse_s, axis=0)
        cov = np.nanmean(np.where(valid, err_d * err_s, np.nan), axis=0)
    if not use_covariance:
        cov = np.zeros_like(cov)

    denominator = mse_d + mse_s - 2.0 * cov
    lam = np.full(d.shape[1], np.nan)
    ok = denominator > 0.0
    lam[ok] = (mse_s[ok] - cov[ok]) / denominator[ok]
    tie = ~ok & (mse_d == mse_s)
    lam[tie] = 0.5
    lam = np.clip(lam, 0.0, 1.0)

    theta = lam * d + (1.0 - lam) * s
    return OracleComposite(lambda_star=lam, theta=theta, mse_d=mse_d,
                           mse_s=mse_s, covariance=cov)
