"""Hot numeric kernels, numba-jitted with a pure-numpy fallback.

Both paths accumulate in person order, so they return bit-identical
float64 results.  Set ``SAEKIT_NO_NUMBA=1`` to force the numpy path;
``benchmarks/bench_kernels.py`` times the two against each other.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "domain_totals",
    "domain_totals_numpy",
    "domain_residual_ss",
    "domain_residual_ss_numpy",
    "bootstrap_domain_totals",
    "bootstrap_domain_totals_numpy",
]


def _numba_enabled() -> bool:
    if os.environ.get("SAEKIT_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _numba_enabled()


def domain_totals_numpy(y, w, dom, n_domains):
    """Per-domain sums (sum of w, sum of w*y) for domain codes 0..n_domains-1."""
    sum_w = np.bincount(dom, weights=w, minlength=n_domains)
    sum_wy = np.bincount(dom, weights=w * y, minlength=n_domains)
    return sum_w, sum_wy


def _domain_totals_loop(y, w, dom, n_domains):
    sum_w = np.zeros(n_domains)
    sum_wy = np.zeros(n_domains)
    for k in range(y.shape[0]):
        d = dom[k]
        sum_w[d] += w[k]
        sum_wy[d] += w[k] * y[k]
    return sum_w, sum_wy


def domain_residual_ss_numpy(y, w, dom, center, n_domains):
    """Per-domain sums of w*(w-1)*(y - center[dom])^2."""
    r = y - center[dom]
    return np.bincount(dom, weights=w * (w - 1.0) * r * r, minlength=n_domains)


def _domain_residual_ss_loop(y, w, dom, center, n_domains):
    out = np.zeros(n_domains)
    for k in range(y.shape[0]):
        d = dom[k]
        r = y[k] - center[d]
        out[d] += w[k] * (w[k] - 1.0) * r * r
    return out


def bootstrap_domain_totals_numpy(y, w, dom, hh, mult, factor, n_domains):
    """Per-replicate, per-domain sums under bootstrap household multiplicities.

    The replicate weight of person k is ``factor * mult[b, hh[k]] * w[k]``.
    Returns two (B, n_domains) arrays: sums of w* and of w*·y.
    """
    n_rep = mult.shape[0]
    sum_w = np.empty((n_rep, n_domains))
    sum_wy = np.empty((n_rep, n_domains))
    for b in range(n_rep):
        ws = factor * mult[b, hh] * w
        sum_w[b] = np.bincount(dom, weights=ws, minlength=n_domains)
        sum_wy[b] = np.bincount(dom, weights=ws * y, minlength=n_domains)
    return sum_w, sum_wy


def _bootstrap_domain_totals_loop(y, w, dom, hh, mult, factor, n_domains):
    n_rep = mult.shape[0]
    n = y.shape[0]
    sum_w = np.zeros((n_rep, n_domains))
    sum_wy = np.zeros((n_rep, n_domains))
    for b in range(n_rep):
        for k in range(n):
            ws = factor * mult[b, hh[k]] * w[k]
            d = dom[k]
            sum_w[b, d] += ws
            sum_wy[b, d] += ws * y[k]
    return sum_w, sum_wy


if NUMBA_ENABLED:
    from numba import njit

    domain_totals = njit(cache=True)(_domain_totals_loop)
    domain_residual_ss = njit(cache=True)(_domain_residual_ss_loop)
    bootstrap_domain_totals = njit(cache=True)(_bootstrap_domain_totals_loop)
else:
    domain_totals = domain_totals_numpy
    domain_residual_ss = domain_residual_ss_numpy
    bootstrap_domain_totals = bootstrap_domain_totals_numpy
