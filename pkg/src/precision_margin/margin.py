"""Precision margins and reliability indices that account for estimation error.

``MIL`` shifts the limit-state threshold, ``MIP`` raises the reliability
target, ``PRI`` inflates the reliability index by its sampling variance and
``CRI`` constrains a quantile of the sampling distribution of reliability.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import (
    DomainError,
    IncompatibleMarginError,
    ParameterDomainError,
    SaturatedProbabilityError,
    ShapeError,
)
from .reliability import _pma_index
from .rngstat import SeededStream, normal_pdf, normal_quantile

__all__ = [
    "MarginKind",
    "MarginSpec",
    "MarginValue",
    "delta_std",
    "mil_margin_delta",
    "mip_margin_delta",
    "mil_margin_exact_tension",
    "check_mip_compatible",
    "beta_gradient",
    "pri_index",
    "cri_quantile",
    "cri_quantile_from_samples",
]


class MarginKind(str, enum.Enum):
    NONE = "none"
    MIL = "mil"
    MIP = "mip"
    CRI = "cri"
    PRI = "pri"


@dataclass(frozen=True)
class MarginSpec:
    kind: MarginKind = MarginKind.NONE
    confidence: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "kind", MarginKind(self.kind))
        if not 0.0 < self.confidence < 1.0:
            raise ParameterDomainError(f"confidence must lie in (0, 1), got {self.confidence}")


@dataclass(frozen=True)
class MarginValue:
    """A computed margin.

    ``value`` is in limit-state units for MIL, probability units for MIP and
    CRI, and index units for PRI. ``std`` is the delta-method standard
    deviation behind it when one exists.
    """

    kind: MarginKind
    value: float
    std: Optional[float] = None


def delta_std(grad, cov) -> float:
    """``sqrt(grad' cov grad)`` with shape checks."""
    g = np.atleast_1d(np.asarray(grad, dtype=float))
    c = np.atleast_2d(np.asarray(cov, dtype=float))
    if g.ndim != 1 or c.shape != (g.size, g.size):
        raise ShapeError(f"gradient of shape {g.shape} does not match covariance {c.shape}")
    return math.sqrt(max(float(g @ c @ g), 0.0))


def mil_margin_delta(grad_D, cov, confidence: float) -> MarginValue:
    """Margin in limit from the delta-method std of the limit-state mean."""
    tau = delta_std(grad_D, cov)
    return MarginValue(MarginKind.MIL, normal_quantile(confidence) * tau, tau)


def mip_margin_delta(grad_R, cov, confidence: float) -> MarginValue:
    """Margin in probability from the delta-method std of the reliability."""
    tau = delta_std(grad_R, cov)
    return MarginValue(MarginKind.MIP, normal_quantile(confidence) * tau, tau)


def mil_margin_exact_tension(tau_u: float, m: int, confidence: float) -> MarginValue:
    """Exact tension margin: the strength mean estimate has std ``tau_u / sqrt(m)``."""
    if tau_u <= 0 or m < 1:
        raise DomainError("need tau_u > 0 and m >= 1")
    std = tau_u / math.sqrt(m)
    return MarginValue(MarginKind.MIL, normal_quantile(confidence) * std, std)


def check_mip_compatible(target: float, p: float) -> float:
    """Return the inflated target ``target + p``, raising when it reaches one."""
    if target + p >= 1.0:
        raise IncompatibleMarginError(
            f"target {target} plus probability margin {p:.3g} is not below one"
        )
    return target + p


def beta_gradient(r_hat: float, grad_R) -> np.ndarray:
    """Carry a reliability gradient to the index ``beta = Phi^-1(R)``."""
    if not 0.0 < r_hat < 1.0:
        raise SaturatedProbabilityError(f"reliability estimate {r_hat} is saturated")
    return np.asarray(grad_R, dtype=float) / normal_pdf(normal_quantile(r_hat))


def pri_index(r_hat: float, grad_beta, cov) -> MarginValue:
    """Predictive reliability index ``mu / sqrt(1 + sigma^2)``."""
    if not 0.0 < r_hat < 1.0:
        raise SaturatedProbabilityError(f"reliability estimate {r_hat} is saturated")
    sigma = delta_std(grad_beta, cov)
    mu = normal_quantile(r_hat)
    return MarginValue(MarginKind.PRI, mu / math.sqrt(1.0 + sigma * sigma), sigma)


def cri_quantile_from_samples(values, alpha: float, convention: str = "exceed") -> MarginValue:
    """Quantile of sampled reliabilities.

    ``convention="exceed"`` returns the value that a fraction ``alpha`` of
    the samples exceed (a lower quantile, conservative for ``alpha > 0.5``).
    ``"below"`` returns the value that a fraction ``alpha`` fall below.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("no reliability samples")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if convention == "exceed":
        k = _pma_index(v.size, alpha)
    elif convention == "below":
        k = _pma_index(v.size, 1.0 - alpha)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return MarginValue(MarginKind.CRI, float(np.partition(v, k - 1)[k - 1]))


def cri_quantile(reliability_sampler: Callable[[SeededStream], float], alpha: float,
                 n_outer: int, stream: SeededStream, convention: str = "exceed") -> MarginValue:
    """Quantile of ``reliability_sampler(stream.child(k))`` over ``k < n_outer``."""
    if n_outer < 100:
        raise DomainError("n_outer must be at least 100")
    values = np.array([reliability_sampler(stream.child(k)) for k in range(n_outer)])
    return cri_quantile_from_samples(values, alpha, convention)
