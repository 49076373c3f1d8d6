"""One-sided normal tolerance bounds (basis values)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, stats

from .exceptions import DomainError, InsufficientDataError, ParameterDomainError
from .rngstat import Family, ParamEstimate, normal_cdf, normal_quantile

__all__ = ["BasisValue", "noncentral_t_cdf", "noncentral_t_quantile", "k_factor", "basis_value"]

_TAIL = 1e-13


def noncentral_t_cdf(x: float, df: float, nc: float) -> float:
    """CDF of the noncentral t law with ``df`` degrees of freedom.

    Uses ``P[T <= x] = E[Phi(x * S - nc)]`` with ``S = sqrt(V / df)`` and
    ``V`` chi-square, integrated numerically over the bulk of ``S``.
    """
    if df <= 0:
        raise DomainError("df must be positive")
    scale = 1.0 / math.sqrt(df)
    lo = stats.chi.ppf(_TAIL, df) * scale
    hi = stats.chi.isf(_TAIL, df) * scale

    def integrand(s):
        return normal_cdf(x * s - nc) * stats.chi.pdf(s / scale, df) / scale

    val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-11, epsrel=1e-10, limit=200)
    return min(max(val, 0.0), 1.0)


def noncentral_t_quantile(q: float, df: float, nc: float) -> float:
    if not 0.0 < q < 1.0:
        raise DomainError("quantile level must lie in (0, 1)")

    def f(x):
        return noncentral_t_cdf(x, df, nc) - q

    width = 1.0 + abs(nc)
    lo, hi = nc - width, nc + width
    while f(lo) > 0:
        lo -= 2.0 * (hi - lo)
    while f(hi) < 0:
        hi += 2.0 * (hi - lo)
    return optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=500)


@lru_cache(maxsize=4096)
def _k_cached(pop_fraction: float, confidence: float, m: int) -> float:
    if pop_fraction == 0.5 and confidence == 0.5:
        return 0.0
    delta = normal_quantile(pop_fraction) * math.sqrt(m)
    return noncentral_t_quantile(confidence, m - 1, delta) / math.sqrt(m)


def k_factor(pop_fraction: float, confidence: float, m: int) -> float:
    """Tolerance factor ``k`` so that ``mean - k * std`` bounds the lower
    ``1 - pop_fraction`` quantile with the given confidence.

    Parameters
    ----------
    pop_fraction : float
        Population fraction that must lie above the bound.
    confidence : float
    m : int
        Sample count, at least 2.
    """
    if m < 2:
        raise InsufficientDataError(f"k_factor needs m >= 2, got {m}")
    for name, v in (("pop_fraction", pop_fraction), ("confidence", confidence)):
        if not 0.0 < v < 1.0:
            raise DomainError(f"{name} must lie in (0, 1), got {v}")
    return _k_cached(float(pop_fraction), float(confidence), int(m))


@dataclass(frozen=True)
class BasisValue:
    value: float
    pop_fraction: float
    confidence: float
    m: int
    k: float


def basis_value(estimate: ParamEstimate, pop_fraction: float, confidence: float) -> BasisValue:
    """Lower tolerance bound ``mean - k * sqrt(var)`` from a normal fit."""
    if estimate.family is not Family.NORMAL:
        raise ParameterDomainError("basis values need a normal estimate")
    mean, var = estimate.theta_hat
    if not var > 0:
        raise ParameterDomainError("estimated variance must be positive")
    k = k_factor(pop_fraction, confidence, estimate.m)
    return BasisValue(float(mean - k * np.sqrt(var)), pop_fraction, confidence, estimate.m, k)
