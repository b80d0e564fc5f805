"""Smoothing of direct variance estimates and the combined max-variance rule.

The generalized variance function (GVF) model is psi ~= K * N^gamma, fitted
by ordinary least squares on log(psi_d) against log(N) over the domains with
a positive direct variance estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SmoothingError(ValueError):
    pass


@dataclass(frozen=True)
class GvfFit:
    log_k: float
    gamma: float
    residual_variance: float
    n_used: int

    @property
    def k(self) -> float:
        return float(np.exp(self.log_k))


def gvf_fit(sizes, psi_d) -> GvfFit:
    """OLS fit of log(psi_d) = log(K) + gamma*log(N); needs >= 3 usable domains."""
    sizes = np.asarray(sizes, dtype=np.float64)
    psi_d = np.asarray(psi_d, dtype=np.float64)
    usable = np.isfinite(psi_d) & (psi_d > 0.0)
    if usable.sum() < 3:
        raise SmoothingError(f"GVF fit needs >= 3 domains with positive variance "
                             f"estimates, got {int(usable.sum())}")
    x = np.log(sizes[usable])
    if np.ptp(x) == 0.0:
        raise SmoothingError("GVF fit needs non-identical domain sizes")
    t = np.log(psi_d[usable])
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, t, rcond=None)
    resid = t - design @ coef
    dof = max(int(usable.sum()) - 2, 1)
    return GvfFit(log_k=float(coef[0]), gamma=float(coef[1]),
                  residual_variance=float(resid @ resid / dof), n_used=int(usable.sum()))


def gvf_predict(fit: GvfFit, sizes) -> np.ndarray:
    """Smoothed variances K * N^gamma, strictly positive for every domain."""
    sizes = np.asarray(sizes, dtype=np.float64)
    return np.exp(fit.log_k + fit.gamma * np.log(sizes))


@dataclass(frozen=True)
class VarianceTriple:
    """Direct, smoothed and combined (max) variance estimates per domain.

    lambda_ratio = min(psi_s, psi_d) / max(psi_s, psi_d) is the weight the
    variance-ratio composite gives the direct estimator; it is 1 on ties and
    0 when psi_d == 0.
    """

    psi_d: np.ndarray
    psi_s: np.ndarray
    psi_c: np.ndarray
    lambda_ratio: np.ndarray


def combine_variances(psi_s, psi_d) -> VarianceTriple:
    psi_s = np.asarray(psi_s, dtype=np.float64)
    psi_d = np.asarray(psi_d, dtype=np.float64)
    if np.any(~np.isfinite(psi_s)) or np.any(psi_s <= 0.0):
        raise SmoothingError("smoothed variances must be positive (smoothing must precede)")
    if np.any(~np.isfinite(psi_d)) or np.any(psi_d < 0.0):
        raise SmoothingError("direct variance estimates must be finite and non-negative")
    psi_c = np.maximum(psi_s, psi_d)
    lam = np.minimum(psi_s, psi_d) / psi_c
    return VarianceTriple(psi_d=psi_d, psi_s=psi_s, psi_c=psi_c, lambda_ratio=lam)
