"""Parametric random-variable models, estimators and seeded random streams.

Normal laws are parameterized by (mean, variance), exponential laws by their
rate ``lam`` with ``X = Exp(1) / lam``. Scores are gradients of the log
density with respect to these parameters, in that order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .exceptions import (
    DegenerateSampleError,
    DomainError,
    InsufficientDataError,
    ParameterDomainError,
    SupportError,
)

__all__ = [
    "Family",
    "DistributionModel",
    "ParamEstimate",
    "SeededStream",
    "sample",
    "pdf",
    "score",
    "fit_normal",
    "fit_exponential_rate",
    "normal_quantile",
    "normal_cdf",
    "normal_pdf",
]


class Family(str, enum.Enum):
    NORMAL = "normal"
    EXPONENTIAL_RATE = "exponential_rate"


_PARAM_NAMES = {
    Family.NORMAL: ("mean", "var"),
    Family.EXPONENTIAL_RATE: ("rate",),
}


@dataclass(frozen=True)
class DistributionModel:
    """A univariate parametric law.

    Use the :meth:`normal` and :meth:`exponential_rate` constructors rather
    than passing raw parameter tuples.
    """

    family: Family
    params: tuple[float, ...]

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != len(_PARAM_NAMES[family]):
            raise ParameterDomainError(
                f"{family.value} takes {len(_PARAM_NAMES[family])} parameters, got {len(params)}"
            )
        if not all(np.isfinite(params)):
            raise ParameterDomainError(f"non-finite parameters {params}")
        if family is Family.NORMAL and params[1] <= 0:
            raise ParameterDomainError(f"normal variance must be positive, got {params[1]}")
        if family is Family.EXPONENTIAL_RATE and params[0] <= 0:
            raise ParameterDomainError(f"exponential rate must be positive, got {params[0]}")

    @classmethod
    def normal(cls, mean: float, var: float) -> "DistributionModel":
        return cls(Family.NORMAL, (mean, var))

    @classmethod
    def exponential_rate(cls, rate: float) -> "DistributionModel":
        return cls(Family.EXPONENTIAL_RATE, (rate,))

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self.family]

    @property
    def n_params(self) -> int:
        return len(self.params)

    @property
    def mean(self) -> float:
        if self.family is Family.NORMAL:
            return self.params[0]
        return 1.0 / self.params[0]

    @property
    def var(self) -> float:
        if self.family is Family.NORMAL:
            return self.params[1]
        return 1.0 / self.params[0] ** 2


@dataclass(frozen=True, eq=False)
class ParamEstimate:
    """Estimated parameter vector with its sampling covariance.

    Attributes
    ----------
    theta_hat : ndarray of shape (p,)
    cov : ndarray of shape (p, p)
        Estimated covariance of ``theta_hat`` (the plug-in T_m).
    m : int
        Number of samples the estimate was built from.
    family : Family
    """

    theta_hat: np.ndarray
    cov: np.ndarray
    m: int
    family: Family = Family.NORMAL

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (theta.size, theta.size):
            raise ParameterDomainError(
                f"cov shape {cov.shape} does not match theta_hat of size {theta.size}"
            )
        if not np.allclose(cov, cov.T):
            raise ParameterDomainError("cov must be symmetric")
        if np.any(np.diag(cov) <= 0):
            raise ParameterDomainError("cov must have a strictly positive diagonal")
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "m", int(self.m))

    def model(self) -> DistributionModel:
        return DistributionModel(self.family, tuple(self.theta_hat))

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self.family]


@dataclass(frozen=True)
class SeededStream:
    """Counter-based random stream keyed by ``(seed, stream_id, *path)``.

    Every call to :meth:`generator` returns a fresh Philox generator positioned
    at the start of the stream, so identical keys always reproduce identical
    draws no matter how work is interleaved across processes.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise DomainError("seed must be a 64-bit unsigned value")
        if self.stream_id < 0 or any(k < 0 for k in self.path):
            raise DomainError("stream ids must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *keys: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))


def sample(model: DistributionModel, n: int, stream: SeededStream) -> np.ndarray:
    """Draw ``n`` i.i.d. values from ``model`` using ``stream``.

    Normal draws are produced as ``mean + sqrt(var) * Z`` so that two models
    sampled with the same stream share their underlying variates.
    """
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    gen = stream.generator()
    if model.family is Family.NORMAL:
        mean, var = model.params
        return mean + np.sqrt(var) * gen.standard_normal(n)
    return gen.standard_exponential(n) / model.params[0]


def pdf(model: DistributionModel, x):
    x = np.asarray(x, dtype=float)
    if model.family is Family.NORMAL:
        mean, var = model.params
        return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
    lam = model.params[0]
    return np.where(x >= 0, lam * np.exp(-lam * np.maximum(x, 0.0)), 0.0)


def score(model: DistributionModel, x) -> np.ndarray:
    """Gradient of the log density with respect to the model parameters.

    Returns an array of shape ``(n_params,)`` for scalar ``x`` and
    ``(len(x), n_params)`` for a vector.
    """
    xa = np.asarray(x, dtype=float)
    if model.family is Family.NORMAL:
        mean, var = model.params
        dev = xa - mean
        out = np.stack([dev / var, (dev**2 - var) / (2.0 * var**2)], axis=-1)
    else:
        if np.any(xa < 0):
            raise SupportError("exponential score is undefined for negative x")
        lam = model.params[0]
        out = (1.0 / lam - xa)[..., None]
    return out


def fit_normal(samples, cov_convention: str = "chi2") -> ParamEstimate:
    """Sample mean and unbiased variance with their sampling covariance.

    ``cov_convention="chi2"`` uses Var[S^2] = 2 S^4 / (m - 1), the value implied
    by the chi-square law of S^2. ``"printed"`` uses S^4 / (m - 1) instead.
    """
    x = np.asarray(samples, dtype=float).ravel()
    m = x.size
    if m < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {m}")
    mean = x.mean()
    var = x.var(ddof=1)
    if var <= 0:
        raise DegenerateSampleError("all samples are identical")
    if cov_convention == "chi2":
        var_of_var = 2.0 * var**2 / (m - 1)
    elif cov_convention == "printed":
        var_of_var = var**2 / (m - 1)
    else:
        raise ValueError(f"unknown cov_convention {cov_convention!r}")
    cov = np.diag([var / m, var_of_var])
    return ParamEstimate(np.array([mean, var]), cov, m, Family.NORMAL)


def fit_exponential_rate(samples) -> ParamEstimate:
    """Rate estimate 1/mean with its delta-method variance rate^2 / m."""
    x = np.asarray(samples, dtype=float).ravel()
    m = x.size
    if m < 1:
        raise InsufficientDataError("need at least one sample")
    if np.any(x <= 0):
        raise SupportError("exponential samples must be strictly positive")
    lam = 1.0 / x.mean()
    return ParamEstimate(np.array([lam]), np.array([[lam**2 / m]]), m, Family.EXPONENTIAL_RATE)


# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _lower_quantile(p: np.ndarray) -> np.ndarray:
    # valid for 0 < p <= 0.5
    x = np.empty_like(p)
    tail = p < _P_LOW
    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[tail] = num / den
    body = ~tail
    if np.any(body):
        q = p[body] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[body] = num / den
    # one Halley step against the exact CDF
    e = 0.5 * special.erfc(-x / np.sqrt(2.0)) - p
    u = e * np.sqrt(2.0 * np.pi) * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_quantile(p):
    """Inverse standard normal CDF, accurate to well below 1e-9."""
    pa = np.asarray(p, dtype=float)
    if np.any(~((pa > 0) & (pa < 1))):
        raise DomainError("normal_quantile needs 0 < p < 1")
    flat = np.atleast_1d(pa).ravel()
    out = np.empty_like(flat)
    upper = flat > 0.5
    out[~upper] = _lower_quantile(flat[~upper])
    # 1 - p is exact in floating point for p in (0.5, 1)
    out[upper] = -_lower_quantile(1.0 - flat[upper])
    if pa.ndim == 0:
        return float(out[0])
    return out.reshape(pa.shape)


def normal_cdf(x):
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return float(out) if out.ndim == 0 else out
