"""Benchmark design problems and their closed-form oracles.

Three problems are provided:

* uniaxial tension: choose the wall thickness ``t`` of a tube with inner
  radius ``r`` so that strength ``U`` exceeds stress ``F / A(t)``;
* cantilever beam: choose width ``w`` and thickness ``t`` subject to a stress
  and a tip-displacement limit state;
* exponential threshold: choose ``d`` so that ``X ~ Exp(1) / rate`` stays
  below it.

Limit states follow the convention ``g > 0`` success, ``g <= 0`` failure, and
take ``(d, X)`` where ``X`` maps variable names to sample arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .exceptions import DomainError, InfeasibleTargetError, ParameterDomainError
from .rngstat import DistributionModel, Family, normal_cdf, normal_pdf, normal_quantile

__all__ = [
    "RandomVariable",
    "DesignProblem",
    "TensionParams",
    "tension_area",
    "tension_thickness",
    "tension_limit_state",
    "tension_exact_design",
    "tension_reliability",
    "tension_reliability_gradient",
    "tension_problem",
    "BEAM_LENGTH",
    "BEAM_MAX_DISPLACEMENT",
    "BEAM_TARGET",
    "beam_truth_models",
    "beam_limit_states",
    "beam_problem",
    "exp_reliability",
    "exp_exact_design",
    "exp_problem",
]


@dataclass(frozen=True)
class RandomVariable:
    """A named input with its law; ``estimated`` marks parameters learned from data."""

    name: str
    model: DistributionModel
    estimated: bool


@dataclass(frozen=True)
class DesignProblem:
    """A reliability-constrained sizing problem.

    Attributes
    ----------
    name : str
    design_names : tuple of str
    bounds : tuple of (low, high) pairs
    cost : callable
        ``cost(d) -> float``.
    limit_states : tuple of callables
        Each maps ``(d, X)`` to an array of limit-state values.
    variables : tuple of RandomVariable
    targets : tuple of float
        Required reliability per limit state.
    analytic_reliability : callable, optional
        ``f(d, models) -> tuple`` of exact reliabilities, where ``models``
        maps variable names to laws.
    monotone_index : int, optional
        Design coordinate along which every limit state is nondecreasing.
    """

    name: str
    design_names: tuple
    bounds: tuple
    cost: Callable
    limit_states: tuple
    variables: tuple
    targets: tuple
    analytic_reliability: Optional[Callable] = None
    monotone_index: Optional[int] = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if len(self.bounds) != len(self.design_names):
            raise ParameterDomainError("one bound pair per design variable is required")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ParameterDomainError(f"empty bound interval [{lo}, {hi}]")
        if len(self.targets) != len(self.limit_states):
            raise ParameterDomainError("one reliability target per limit state is required")
        for r in self.targets:
            if not 0.0 < r < 1.0:
                raise ParameterDomainError(f"reliability target {r} outside (0, 1)")

    @property
    def design_dim(self) -> int:
        return len(self.design_names)

    @property
    def n_limit_states(self) -> int:
        return len(self.limit_states)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)

    @property
    def estimated_names(self) -> tuple:
        return tuple(v.name for v in self.variables if v.estimated)

    def models(self) -> dict:
        return {v.name: v.model for v in self.variables}

    def variable(self, name: str) -> RandomVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def with_models(self, models: Mapping[str, DistributionModel]) -> "DesignProblem":
        """Copy with some variable laws replaced."""
        unknown = set(models) - {v.name for v in self.variables}
        if unknown:
            raise KeyError(f"unknown variables {sorted(unknown)}")
        new_vars = tuple(
            replace(v, model=models[v.name]) if v.name in models else v for v in self.variables
        )
        return replace(self, variables=new_vars)

    def with_targets(self, targets: Sequence[float]) -> "DesignProblem":
        return replace(self, targets=tuple(float(r) for r in targets))

    def in_bounds(self, d, atol: float = 1e-12) -> bool:
        d = np.asarray(d, dtype=float)
        return bool(np.all(d >= self.lower - atol) and np.all(d <= self.upper + atol))


# ---------------------------------------------------------------- tension


@dataclass(frozen=True)
class TensionParams:
    """Strength and load parameters of the tension problem (variances, not std)."""

    mu_u: float
    var_u: float
    mu_f: float
    var_f: float
    r: float = 1.0

    def __post_init__(self):
        if min(self.mu_u, self.var_u, self.mu_f, self.r) <= 0 or self.var_f < 0:
            raise ParameterDomainError(f"nonpositive tension parameters {self}")

    @classmethod
    def truth(cls) -> "TensionParams":
        return cls(mu_u=600.0, var_u=60.0**2, mu_f=100.0, var_f=10.0**2, r=1.0)

    @classmethod
    def from_models(cls, models: Mapping[str, DistributionModel], r: float = 1.0) -> "TensionParams":
        u, f = models["U"], models["F"]
        return cls(u.params[0], u.params[1], f.params[0], f.params[1], r)


def tension_area(t, r: float = 1.0):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("thickness must be positive")
    out = np.pi * ((r + t) ** 2 - r**2)
    return float(out) if out.ndim == 0 else out


def tension_thickness(area: float, r: float = 1.0) -> float:
    if area <= 0:
        raise DomainError("area must be positive")
    return math.sqrt(area / math.pi + r * r) - r


def tension_limit_state(t, U, F, r: float = 1.0):
    """``U - F / A(t)``."""
    return np.asarray(U, dtype=float) - np.asarray(F, dtype=float) / tension_area(t, r)


def tension_exact_design(params: TensionParams, R: float) -> tuple[float, float]:
    """Exact area and thickness reaching reliability ``R`` under normal U and F.

    Returns
    -------
    area, thickness : float
    """
    z = normal_quantile(R)
    mu_u, vu, mu_f, vf = params.mu_u, params.var_u, params.mu_f, params.var_f
    denom = mu_u**2 - z**2 * vu
    disc = z**2 * mu_u**2 * vf + z**2 * mu_f**2 * vu - z**4 * vu * vf
    if denom <= 0 or disc < 0:
        raise InfeasibleTargetError(f"reliability {R} is unreachable for {params}")
    # the root on the side of the mean matching the sign of z
    area = (mu_u * mu_f + math.copysign(math.sqrt(disc), z)) / denom
    if area <= 0:
        raise InfeasibleTargetError(f"reliability {R} gives a nonpositive area")
    return area, tension_thickness(area, params.r)


def _tension_terms(t, params: TensionParams):
    area = tension_area(t, params.r)
    a = params.mu_u - params.mu_f / area
    s = np.sqrt(params.var_u + params.var_f / area**2)
    return a, s


def tension_reliability(t, params: TensionParams):
    """Exact ``P[U - F / A(t) > 0]`` for independent normal U and F."""
    a, s = _tension_terms(t, params)
    return normal_cdf(a / s)


def tension_reliability_gradient(t, params: TensionParams) -> np.ndarray:
    """Gradient of :func:`tension_reliability` with respect to ``(mu_u, var_u)``."""
    a, s = _tension_terms(t, params)
    phi = normal_pdf(a / s)
    return np.array([phi / s, -0.5 * phi * a / s**3])


def _tension_g(d, X, r=1.0):
    return tension_limit_state(d[0], X["U"], X["F"], r)


def _tension_cost(d, r=1.0):
    return float(tension_area(d[0], r))


def _tension_analytic(d, models, r=1.0):
    return (float(tension_reliability(d[0], TensionParams.from_models(models, r))),)


def tension_problem(params: TensionParams | None = None, R: float = 0.95,
                    t_bounds: tuple = (1e-3, 0.5)) -> DesignProblem:
    """Tension problem with strength estimated from data and a known load.

    The cost is the cross-sectional area, which is increasing in ``t``.
    """
    p = params or TensionParams.truth()
    return DesignProblem(
        name="tension",
        design_names=("t",),
        bounds=(tuple(t_bounds),),
        cost=partial(_tension_cost, r=p.r),
        limit_states=(partial(_tension_g, r=p.r),),
        variables=(
            RandomVariable("U", DistributionModel.normal(p.mu_u, p.var_u), estimated=True),
            RandomVariable("F", DistributionModel.normal(p.mu_f, p.var_f), estimated=False),
        ),
        targets=(R,),
        analytic_reliability=partial(_tension_analytic, r=p.r),
        monotone_index=0,
        metadata={"r": p.r},
    )


# ------------------------------------------------------------------- beam

BEAM_LENGTH = 100.0
BEAM_MAX_DISPLACEMENT = 2.2535
BEAM_TARGET = 0.99865


def beam_truth_models() -> dict:
    return {
        "H": DistributionModel.normal(500.0, 100.0**2),
        "V": DistributionModel.normal(1000.0, 100.0**2),
        "E": DistributionModel.normal(2.9e7, 1.45e6**2),
        "Y": DistributionModel.normal(40000.0, 2000.0**2),
    }


def _beam_check(w, t, E=None, Y=None):
    if np.any(np.asarray(w) <= 0) or np.any(np.asarray(t) <= 0):
        raise DomainError("beam width and thickness must be positive")
    for name, v in (("E", E), ("Y", Y)):
        if v is not None and np.any(np.asarray(v) <= 0):
            raise DomainError(f"{name} must be positive")


def _beam_stress(w, t, H, V):
    return 600.0 * V / (w * t**2) + 600.0 * H / (w**2 * t)


def _beam_displacement(w, t, H, V, E, L=BEAM_LENGTH):
    return 4.0 * L**3 / (E * w * t) * np.sqrt((V / t**2) ** 2 + (H / w**2) ** 2)


def beam_limit_states(d, X) -> tuple:
    """Stress and displacement limit states ``(1 - S / Y, 1 - D / D0)``.

    ``X`` is either a mapping with keys ``H, V, E, Y`` or a sequence in that
    order.
    """
    w, t = float(d[0]), float(d[1])
    if isinstance(X, Mapping):
        H, V, E, Y = (np.asarray(X[k], dtype=float) for k in ("H", "V", "E", "Y"))
    else:
        H, V, E, Y = (np.asarray(x, dtype=float) for x in X)
    _beam_check(w, t, E, Y)
    g_s = 1.0 - _beam_stress(w, t, H, V) / Y
    g_d = 1.0 - _beam_displacement(w, t, H, V, E) / BEAM_MAX_DISPLACEMENT
    return g_s, g_d


def _beam_g_stress(d, X):
    w, t = float(d[0]), float(d[1])
    _beam_check(w, t, Y=X["Y"])
    return 1.0 - _beam_stress(w, t, X["H"], X["V"]) / X["Y"]


def _beam_g_disp(d, X):
    w, t = float(d[0]), float(d[1])
    _beam_check(w, t, E=X["E"])
    return 1.0 - _beam_displacement(w, t, X["H"], X["V"], X["E"]) / BEAM_MAX_DISPLACEMENT


def _beam_cost(d):
    return float(d[0] * d[1])


def beam_problem(models: Mapping[str, DistributionModel] | None = None,
                 R: float = BEAM_TARGET) -> DesignProblem:
    """Cantilever beam with known loads ``H, V`` and estimated ``E, Y``."""
    laws = beam_truth_models()
    if models:
        laws.update(models)
    return DesignProblem(
        name="beam",
        design_names=("w", "t"),
        bounds=((1.0, 4.0), (1.0, 4.0)),
        cost=_beam_cost,
        limit_states=(_beam_g_stress, _beam_g_disp),
        variables=(
            RandomVariable("H", laws["H"], estimated=False),
            RandomVariable("V", laws["V"], estimated=False),
            RandomVariable("E", laws["E"], estimated=True),
            RandomVariable("Y", laws["Y"], estimated=True),
        ),
        targets=(R, R),
        monotone_index=1,
    )


# ------------------------------------------------------------ exponential


def exp_reliability(d, rate):
    """``1 - exp(-rate * d)``, the chance that ``Exp(1) / rate`` stays below ``d``."""
    d = np.asarray(d, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(d < 0):
        raise DomainError("threshold must be nonnegative")
    if np.any(rate <= 0):
        raise DomainError("rate must be positive")
    out = -np.expm1(-rate * d)
    return float(out) if out.ndim == 0 else out


def exp_exact_design(R: float, rate: float) -> float:
    if not 0.0 < R < 1.0:
        raise DomainError("R must lie in (0, 1)")
    if rate <= 0:
        raise DomainError("rate must be positive")
    return -math.log1p(-R) / rate


def _exp_g(d, X):
    return d[0] - np.asarray(X["X"], dtype=float)


def _exp_cost(d):
    return float(d[0])


def _exp_analytic(d, models):
    return (exp_reliability(d[0], models["X"].params[0]),)


def exp_problem(rate: float = 1.0, R: float = 0.99, d_max: float = 1e3) -> DesignProblem:
    return DesignProblem(
        name="exponential",
        design_names=("d",),
        bounds=((0.0, d_max),),
        cost=_exp_cost,
        limit_states=(_exp_g,),
        variables=(RandomVariable("X", DistributionModel(Family.EXPONENTIAL_RATE, (rate,)), True),),
        targets=(R,),
        analytic_reliability=_exp_analytic,
        monotone_index=0,
    )
