"""Direct (design-based) estimators of domain proportions and their variances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .sampling import Sample


class EmptyDomainError(ValueError):
    """Signals an empty domain sub-sample; callers decide the fallback."""


def hajek_proportion(y, w) -> tuple[float, float]:
    """Weighted sample proportion sum(w*y)/sum(w) and the size estimate sum(w)."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if y.size == 0:
        raise EmptyDomainError("empty domain sub-sample")
    n_hat = float(w.sum())
    return float((w * y).sum() / n_hat), n_hat


def ht_proportion(y, w, domain_size: float) -> float:
    """Horvitz-Thompson proportion sum(w*y)/N_i; an empty sum gives 0."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return float((w * y).sum() / domain_size)


def hajek_variance_simplified(y, w) -> float:
    """Variance estimate sum(w*(w-1)*(y-theta)^2) / sum(w)^2.

    This is the pi_kl ~= pi_k*pi_l collapse of the general double-sum form;
    it vanishes when all residuals are zero or all weights equal 1.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    theta, n_hat = hajek_proportion(y, w)
    r = y - theta
    return float((w * (w - 1.0) * r * r).sum() / (n_hat * n_hat))


def hajek_variance_general(y, pi, pair_matrix) -> float:
    """Double-sum variance estimate of the weighted proportion.

    (1/N_hat^2) * sum_kl (1 - pi_k pi_l / pi_kl) (y_k - theta)(y_l - theta)
                         / (pi_k pi_l)
    """
    y = np.asarray(y, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    joint = np.asarray(pair_matrix, dtype=np.float64)
    if np.any(joint <= 0.0):
        raise ValueError("pairwise inclusion probabilities must be positive")
    w = 1.0 / pi
    theta, n_hat = hajek_proportion(y, w)
    e = (y - theta) * w
    factor = 1.0 - np.outer(pi, pi) / joint
    return float(e @ factor @ e / (n_hat * n_hat))


@dataclass(frozen=True)
class DirectEstimates:
    """Per-domain direct estimates; NaN marks empty domains."""

    n: np.ndarray        # (M,) int64 realized sub-sample sizes
    n_hat: np.ndarray    # (M,) float64 estimated domain sizes (0 when empty)
    theta: np.ndarray    # (M,) float64 Hajek proportions
    psi: np.ndarray      # (M,) float64 simplified variance estimates
    kind: str = "hajek"

    @property
    def empty(self) -> np.ndarray:
        return self.n == 0


def domain_direct_estimates(sample: Sample, study_variable: str) -> DirectEstimates:
    """Hajek proportion and simplified variance for every domain of a sample."""
    dom = sample.domain_id - 1
    y = sample.y[study_variable]
    m = sample.n_domains
    counts = np.bincount(dom, minlength=m)
    sum_w, sum_wy = kernels.domain_totals(y, sample.weight, dom, m)
    observed = counts > 0
    theta = np.full(m, np.nan)
    np.divide(sum_wy, sum_w, out=theta, where=observed)
    center = np.where(observed, theta, 0.0)
    ss = kernels.domain_residual_ss(y, sample.weight, dom, center, m)
    psi = np.full(m, np.nan)
    np.divide(ss, sum_w * sum_w, out=psi, where=observed)
    return DirectEstimates(n=counts.astype(np.int64), n_hat=sum_w, theta=theta, psi=psi)
