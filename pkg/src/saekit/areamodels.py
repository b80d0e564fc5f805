"""Area-level models: weighted regression, random-effect variance, EBLUP.

The working model treats each domain's direct estimate as
``theta_d_i = z_i' beta + v_i + e_i`` with known sampling variances psi_i and
a common random-effect variance sigma_v^2 estimated by the method of
moments.  The EBLUP shrinks the direct estimate toward the regression
prediction with weight gamma_i = sigma_v^2 / (psi_i + sigma_v^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ModelError(ValueError):
    pass


class MomentConvergenceError(RuntimeError):
    def __init__(self, message, last_sigma_v2, last_residual):
        super().__init__(message)
        self.last_sigma_v2 = last_sigma_v2
        self.last_residual = last_residual


@dataclass(frozen=True)
class AreaLevelData:
    """Per-domain direct estimates, working variances and covariates."""

    theta_d: np.ndarray   # (M,)
    psi: np.ndarray       # (M,) positive working variances
    z: np.ndarray         # (M, P) covariates, leading column of ones

    def __post_init__(self):
        m, p = self.z.shape
        if m <= p:
            raise ModelError(f"need more domains than covariates (M={m}, P={p})")
        if np.any(~np.isfinite(self.psi)) or np.any(self.psi <= 0.0):
            raise ModelError("working variances must be positive")
        if np.linalg.matrix_rank(self.z) < p:
            raise ModelError("covariate matrix is rank deficient")


@dataclass(frozen=True)
class FhFit:
    beta: np.ndarray      # (P,)
    sigma_v2: float
    gamma: np.ndarray     # (M,) shrinkage weights in [0, 1)
    iterations: int
    converged: bool
    moment_residual: float


def _collinear_columns(z: np.ndarray) -> list[int]:
    _, s, vt = np.linalg.svd(z, full_matrices=False)
    null = vt[s < s[0] * 1e-10] if s[0] > 0 else vt
    involved: set[int] = set()
    for vec in null:
        involved.update(np.flatnonzero(np.abs(vec) > 1e-8).tolist())
    return sorted(involved)


def gls_beta(z, theta_d, v) -> np.ndarray:
    """Weighted least squares coefficients with per-domain variances v.

    Solves (sum z_i z_i' / v_i) beta = sum z_i theta_i / v_i.
    """
    z = np.asarray(z, dtype=np.float64)
    theta_d = np.asarray(theta_d, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(v <= 0.0):
        raise ModelError("weights require positive variances")
    zw = z / v[:, None]
    normal = zw.T @ z
    rhs = zw.T @ theta_d
    if np.linalg.matrix_rank(normal) < z.shape[1]:
        raise ModelError(f"rank-deficient weighted design; collinear columns "
                         f"{_collinear_columns(z * (1.0 / np.sqrt(v))[:, None])}")
    return np.linalg.solve(normal, rhs)


def regression_synthetic(z, theta_d, psi) -> tuple[np.ndarray, np.ndarray]:
    """Predictions z_i' beta for every domain, with beta weighted by 1/psi."""
    beta = gls_beta(z, theta_d, psi)
    return np.asarray(z) @ beta, beta


def fit_sigma_v2_moments(z, theta_d, psi, tol: float = 1e-8,
                         max_iter: int = 200) -> FhFit:
    """Method-of-moments random-effect variance, truncated at zero.

    Iterates damped Newton steps on sigma^2 so that the weighted residual sum
    of squares sum r_i^2/(psi_i + sigma^2) matches its degrees of freedom
    M - P, refitting beta at every step; a bracketing bisection guard keeps
    the iteration monotone.
    """
    z = np.asarray(z, dtype=np.float64)
    theta_d = np.asarray(theta_d, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    m, p = z.shape
    dof = m - p
    if dof <= 0:
        raise ModelError(f"need more domains than covariates (M={m}, P={p})")

    def moment_gap(s2):
        beta = gls_beta(z, theta_d, psi + s2)
        r = theta_d - z @ beta
        a = psi + s2
        return float(np.sum(r * r / a) - dof), r, a, beta

    beta0 = gls_beta(z, theta_d, np.ones(m))
    r0 = theta_d - z @ beta0
    s2 = max(0.0, float(np.mean(r0 * r0) - np.mean(psi)))

    lower, upper = 0.0, np.inf
    gap = np.nan
    for iteration in range(1, max_iter + 1):
        gap, r, a, beta = moment_gap(s2)
        if abs(gap) <= tol or (s2 == 0.0 and gap <= 0.0):
            gamma = s2 / (psi + s2) if s2 > 0.0 else np.zeros(m)
            return FhFit(beta=beta, sigma_v2=s2, gamma=gamma,
                         iterations=iteration, converged=True, moment_residual=gap)
        if gap > 0.0:
            lower = s2
        else:
            upper = min(upper, s2)
        slope = float(np.sum(r * r / (a * a)))
        proposal = s2 + gap / slope
        if not (lower < proposal < upper):
            proposal = 0.5 * (lower + upper) if np.isfinite(upper) else 2.0 * s2 + 1e-12
        s2 = max(0.0, proposal)
    raise MomentConvergenceError(
        f"moment equation did not converge in {max_iter} iterations "
        f"(last sigma_v2={s2:.6g}, residual={gap:.3g})", s2, gap)


def fh_fit(z, theta_d, psi, tol: float = 1e-8, max_iter: int = 200) -> FhFit:
    """Fit the area-level model: moment variance plus final weighted beta."""
    return fit_sigma_v2_moments(z, theta_d, psi, tol=tol, max_iter=max_iter)


def eblup(z, theta_d, psi, fit: FhFit) -> np.ndarray:
    """Shrinkage predictions gamma*theta_d + (1-gamma)*z'beta."""
    synthetic = np.asarray(z) @ fit.beta
    return fit.gamma * np.asarray(theta_d) + (1.0 - fit.gamma) * synthetic


def eblup_mse(z, psi, sigma_v2: float, z_out=None, psi_out=None) -> np.ndarray:
    """Second-order MSE estimates for the moment-fitted EBLUP.

    Leading term gamma_i*psi_i plus (1-gamma_i)^2 times a bracket holding the
    regression-uncertainty quadratic form, the moment-estimator penalty
    4M/(psi_i+s2) * (sum 1/(psi_j+s2))^-2, and the correction
    -2*s2*(sum gamma_j)^-3 * (M*sum gamma_j^2 - (sum gamma_j)^2).  The last
    term is defined as its limit 0 when every gamma_j is zero.

    The model sums run over (z, psi); per-domain values are produced for
    (z_out, psi_out), which default to the fitted domains.
    """
    z = np.asarray(z, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    z_out = z if z_out is None else np.asarray(z_out, dtype=np.float64)
    psi_out = psi if psi_out is None else np.asarray(psi_out, dtype=np.float64)
    m = z.shape[0]
    a = psi + sigma_v2
    gamma = sigma_v2 / a
    a_out = psi_out + sigma_v2
    gamma_out = sigma_v2 / a_out
    normal = (z / a[:, None]).T @ z
    quad = np.einsum("ip,pq,iq->i", z_out, np.linalg.inv(normal), z_out)
    penalty = (4.0 * m / a_out) / np.sum(1.0 / a) ** 2
    gamma_sum = float(gamma.sum())
    if gamma_sum > 0.0:
        braces = m * float(np.sum(gamma * gamma)) - gamma_sum ** 2
        correction = 2.0 * sigma_v2 * braces / gamma_sum ** 3
    else:
        correction = 0.0
    return gamma_out * psi_out + (1.0 - gamma_out) ** 2 * (quad + penalty - correction)
