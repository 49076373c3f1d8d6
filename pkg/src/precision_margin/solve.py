"""Design strategies and reliability-based design optimization loops.

Closed-form and root-finding solvers cover the tension and exponential
problems. :func:`solve_rbdo_mc` handles general problems with Monte Carlo
constraints in quantile (performance-measure) form, alternating a design step
with a damped margin update until the cost settles.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .exceptions import (
    DomainError,
    InfeasibleTargetError,
    NonphysicalBasisError,
    ParameterDomainError,
    PrecisionMarginError,
    SaturatedProbabilityError,
    UnsupportedModeError,
)
from .margin import (
    MarginKind,
    MarginSpec,
    MarginValue,
    beta_gradient,
    check_mip_compatible,
    cri_quantile_from_samples,
    delta_std,
    mil_margin_delta,
    mip_margin_delta,
)
from .problems import (
    DesignProblem,
    TensionParams,
    exp_exact_design,
    exp_reliability,
    tension_area,
    tension_exact_design,
    tension_reliability,
    tension_reliability_gradient,
    tension_thickness,
)
from .reliability import (
    SampleBatch,
    draw_batch,
    joint_covariance,
    mc_limit_mean_gradient,
    mc_reliability,
    pma_quantile,
)
from .rngstat import (
    DistributionModel,
    Family,
    ParamEstimate,
    SeededStream,
    fit_exponential_rate,
    normal_cdf,
    normal_quantile,
)
from .tolerance import BasisValue, basis_value

__all__ = [
    "Strategy",
    "OptimizerConfig",
    "StrategyConfig",
    "DesignResult",
    "solve_tension",
    "solve_regulated",
    "solve_mixed_bv",
    "solve_rbdo_mc",
    "exp_rate_draws",
    "exp_threshold_design",
    "solve_exp_threshold",
]


class Strategy(str, enum.Enum):
    PLUG_IN = "plug_in"
    REGULATED = "regulated"
    MIXED_BV = "mixed_bv"
    MIL = "mil"
    MIP = "mip"
    CRI = "cri"
    PRI = "pri"


_MARGIN_OF = {
    Strategy.MIL: MarginKind.MIL,
    Strategy.MIP: MarginKind.MIP,
    Strategy.CRI: MarginKind.CRI,
    Strategy.PRI: MarginKind.PRI,
}


@dataclass(frozen=True)
class OptimizerConfig:
    """Outer-loop and design-step settings.

    ``penalty``, ``initial_step`` and ``min_step`` only affect the
    penalty pattern search used for problems without a monotone coordinate.
    """

    max_outer_iters: int = 100
    cost_tolerance: float = 1e-6
    damping: float = 0.5
    multistart: int = 5
    penalty: float = 1e3
    initial_step: float = 0.5
    min_step: float = 1e-4

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.multistart < 1:
            raise ParameterDomainError("iteration and multistart counts must be positive")
        if self.cost_tolerance <= 0 or self.min_step <= 0 or self.initial_step <= 0:
            raise ParameterDomainError("tolerances and steps must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ParameterDomainError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class StrategyConfig:
    """Everything a solver needs to know about one design strategy.

    Parameters
    ----------
    strategy : Strategy
    confidence : float
        Confidence of the margin (``alpha`` for CRI).
    reliability_target : float, optional
        Overrides the problem's own targets when given.
    basis : (pop_fraction, confidence), optional
        Tolerance bound used by the basis-value strategies.
    mc_n : int
        Monte Carlo sample count per reliability analysis.
    margin_model : {"delta", "exact"}
        ``"exact"`` uses the true sampling law of the estimates (requires the
        truth), ``"delta"`` the first-order approximation from the data.
    cri_convention : {"exceed", "below"}
        Which tail of the reliability sampling distribution CRI constrains.
    n_outer : int
        Draws of the parameter sampling distribution (CRI, exact margins).
    centered_gradient : bool
        Center the indicator before weighting by the score in MIP gradients.
    mc_error_in_margin : bool
        Add the Monte Carlo variance ``R(1 - R) / n`` of the reliability
        estimate to the delta variance behind the MIP margin.
    """

    strategy: Strategy
    confidence: float = 0.95
    reliability_target: Optional[float] = None
    basis: Optional[tuple] = None
    mc_n: int = 10_000
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    margin_model: str = "delta"
    cri_convention: str = "exceed"
    n_outer: int = 10_000
    centered_gradient: bool = True
    mc_error_in_margin: bool = True
    regulated_factor: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not 0.0 < self.confidence < 1.0:
            raise ParameterDomainError("confidence must lie in (0, 1)")
        if self.reliability_target is not None and not 0.0 < self.reliability_target < 1.0:
            raise ParameterDomainError("reliability_target must lie in (0, 1)")
        if self.strategy in (Strategy.MIXED_BV, Strategy.REGULATED):
            if self.basis is None:
                raise ParameterDomainError(f"{self.strategy.value} requires a basis (P, C)")
        if self.basis is not None:
            object.__setattr__(self, "basis", tuple(float(b) for b in self.basis))
        if self.margin_model not in ("delta", "exact"):
            raise ParameterDomainError(f"unknown margin_model {self.margin_model!r}")
        if self.cri_convention not in ("exceed", "below"):
            raise ParameterDomainError(f"unknown cri_convention {self.cri_convention!r}")
        if self.mc_n < 1 or self.n_outer < 1:
            raise ParameterDomainError("sample counts must be positive")

    @property
    def margin(self) -> MarginSpec:
        return MarginSpec(_MARGIN_OF.get(self.strategy, MarginKind.NONE), self.confidence)


@dataclass(frozen=True, eq=False)
class DesignResult:
    d_star: np.ndarray
    cost: float
    reliabilities: tuple
    margins: tuple
    feasible: bool
    iterations: int
    error_code: Optional[str] = None
    message: str = ""

    @classmethod
    def failed(cls, err: PrecisionMarginError, dim: int = 1, iterations: int = 0) -> "DesignResult":
        return cls(np.full(dim, np.nan), math.nan, (), (), False, iterations,
                   getattr(err, "code", "error"), str(err))


def _no_margin() -> MarginValue:
    return MarginValue(MarginKind.NONE, 0.0)


# ---------------------------------------------------------------- tension


def _tension_result(params: TensionParams, area: float, margins, iterations=1) -> DesignResult:
    t = tension_thickness(area, params.r)
    r_hat = float(tension_reliability(t, params))
    return DesignResult(np.array([t]), float(area), (r_hat,), tuple(margins), True, iterations)


def solve_regulated(B: BasisValue, mu_f: float, factor: float = 1.5, r: float = 1.0) -> DesignResult:
    """Factor-of-safety sizing ``A = factor * mu_f / B`` against the basis value."""
    if B.value <= 0:
        raise NonphysicalBasisError(f"basis value {B.value} is not positive")
    area = factor * mu_f / B.value
    t = tension_thickness(area, r)
    return DesignResult(np.array([t]), float(area), (), (_no_margin(),), True, 1)


def solve_mixed_bv(B: BasisValue, load_model: DistributionModel, R: float, r: float = 1.0) -> DesignResult:
    """Reliability sizing with strength fixed at the basis value and a random load."""
    if B.value <= 0:
        raise NonphysicalBasisError(f"basis value {B.value} is not positive")
    mu_f, var_f = load_model.params
    area = (mu_f + normal_quantile(R) * math.sqrt(var_f)) / B.value
    if area <= 0:
        raise InfeasibleTargetError("mixed basis-value design has nonpositive area")
    t = tension_thickness(area, r)
    return DesignResult(np.array([t]), float(area), (), (_no_margin(),), True, 1)


def _tension_theta_draws(mu: float, var: float, m: int, n: int, stream: SeededStream):
    """Draws of (mean, unbiased variance) estimates for normal samples of size m."""
    gen = stream.generator()
    means = mu + math.sqrt(var / m) * gen.standard_normal(n)
    variances = var * gen.chisquare(m - 1, n) / (m - 1)
    return means, variances


def _tension_r_draws(area: float, means, variances, load: TensionParams):
    s = np.sqrt(variances + load.var_f / area**2)
    return normal_cdf((means - load.mu_f / area) / s)


def _bracket_thickness(f, lo=1e-8, hi=1.0, grow=40):
    """Root of an increasing function of thickness, expanding the upper end."""
    if f(lo) >= 0:
        raise InfeasibleTargetError("constraint is satisfied at vanishing thickness")
    for _ in range(grow):
        if f(hi) > 0:
            return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        lo, hi = hi, 2.0 * hi
    raise InfeasibleTargetError("no thickness satisfies the constraint")


def solve_tension(config: StrategyConfig, estimate: ParamEstimate, load: DistributionModel,
                  R: Optional[float] = None, *, r: float = 1.0,
                  truth: Optional[TensionParams] = None,
                  stream: Optional[SeededStream] = None) -> DesignResult:
    """Size the tension member from a strength estimate.

    Parameters
    ----------
    config : StrategyConfig
    estimate : ParamEstimate
        Normal fit of strength coupons.
    load : DistributionModel
        Known normal load law.
    R : float, optional
        Reliability target; defaults to ``config.reliability_target``.
    truth : TensionParams, optional
        Needed only for ``margin_model="exact"``.
    stream : SeededStream, optional
        Randomness for the sampling-distribution draws (MIP exact, CRI).
    """
    R = config.reliability_target if R is None else R
    if R is None:
        raise ParameterDomainError("no reliability target given")
    mu_hat, var_hat = estimate.theta_hat
    mu_f, var_f = load.params
    plug = TensionParams(mu_hat, var_hat, mu_f, var_f, r)
    z_c = normal_quantile(config.confidence)
    s = config.strategy
    opt = config.optimizer

    if s is Strategy.PLUG_IN:
        area, _ = tension_exact_design(plug, R)
        return _tension_result(plug, area, (_no_margin(),))

    if s in (Strategy.REGULATED, Strategy.MIXED_BV):
        B = basis_value(estimate, *config.basis)
        if s is Strategy.REGULATED:
            return solve_regulated(B, mu_f, config.regulated_factor, r)
        return solve_mixed_bv(B, load, R, r)

    if s is Strategy.MIL:
        if config.margin_model == "exact":
            if truth is None:
                raise ParameterDomainError("exact MIL needs the true parameters")
            tau = math.sqrt(truth.var_u / estimate.m)
        else:
            tau = delta_std([1.0, 0.0], estimate.cov)
        g = z_c * tau
        if mu_hat - g <= 0:
            raise InfeasibleTargetError("margin exceeds the strength estimate")
        area, _ = tension_exact_design(TensionParams(mu_hat - g, var_hat, mu_f, var_f, r), R)
        return _tension_result(plug, area, (MarginValue(MarginKind.MIL, g, tau),))

    if s is Strategy.MIP:
        if config.margin_model == "exact":
            if truth is None or stream is None:
                raise ParameterDomainError("exact MIP needs the true parameters and a stream")
            means, variances = _tension_theta_draws(truth.mu_u, truth.var_u, estimate.m,
                                                    config.n_outer, stream)

            def margin_at(area):
                t = tension_thickness(area, r)
                diff = _tension_r_draws(area, means, variances, plug) - tension_reliability(t, truth)
                return MarginValue(MarginKind.MIP, float(np.quantile(diff, config.confidence)))
        else:
            def margin_at(area):
                grad = tension_reliability_gradient(tension_thickness(area, r), plug)
                return mip_margin_delta(grad, estimate.cov, config.confidence)

        p, cost_prev, area = 0.0, math.inf, math.nan
        for it in range(1, opt.max_outer_iters + 1):
            area, _ = tension_exact_design(plug, check_mip_compatible(R, p))
            mv = margin_at(area)
            if abs(area - cost_prev) < opt.cost_tolerance:
                return _tension_result(plug, area, (MarginValue(MarginKind.MIP, p, mv.std),), it)
            cost_prev = area
            p = (1.0 - opt.damping) * p + opt.damping * mv.value
        return DesignResult(np.array([tension_thickness(area, r)]), area, (), (), False,
                            opt.max_outer_iters, "nonconverged", "MIP fixed point did not settle")

    z_r = normal_quantile(R)
    if s is Strategy.PRI:
        def pri_gap(t):
            area = tension_area(t, r)
            a = mu_hat - mu_f / area
            sd = math.sqrt(var_hat + var_f / area**2)
            grad_beta = np.array([1.0 / sd, -0.5 * a / sd**3])
            sigma = delta_std(grad_beta, estimate.cov)
            return (a / sd) / math.sqrt(1.0 + sigma * sigma) - z_r

        t = _bracket_thickness(pri_gap)
        beta = pri_gap(t) + z_r
        return _tension_result(plug, tension_area(t, r), (MarginValue(MarginKind.PRI, beta),))

    if s is Strategy.CRI:
        if stream is None:
            raise ParameterDomainError("CRI needs a stream for the bootstrap draws")
        means, variances = _tension_theta_draws(mu_hat, var_hat, estimate.m, config.n_outer, stream)

        def r_alpha(t):
            vals = _tension_r_draws(tension_area(t, r), means, variances, plug)
            return cri_quantile_from_samples(vals, config.confidence, config.cri_convention).value

        t = _bracket_thickness(lambda t: r_alpha(t) - R)
        return _tension_result(plug, tension_area(t, r), (MarginValue(MarginKind.CRI, r_alpha(t)),))

    raise UnsupportedModeError(f"strategy {s.value} is not available for tension")


# ------------------------------------------------------------ exponential


def exp_rate_draws(rate: float, m: int, n: int, stream: SeededStream) -> np.ndarray:
    """Draws of ``1 / mean`` over ``m`` exponential samples with the given rate."""
    if m < 1 or n < 1:
        raise DomainError("m and n must be positive")
    return rate * m / stream.generator().standard_gamma(m, n)


def exp_threshold_design(strategy: Strategy, rate_hat: float, rate_draws, F_target: float,
                         alpha: float, convention: str = "exceed",
                         reference_rate: Optional[float] = None) -> DesignResult:
    """Threshold design for the exponential problem given rate draws.

    ``rate_draws`` sample the sampling distribution of the rate estimate. For
    CRI they are centered on ``rate_hat``; for MIP on ``reference_rate``
    (``rate_hat`` when omitted), and the margin is the ``alpha``-quantile of
    ``R(draw) - R(reference_rate)``.
    """
    strategy = Strategy(strategy)
    if not 0.0 < F_target < 1.0:
        raise DomainError("F_target must lie in (0, 1)")
    target = 1.0 - F_target
    if strategy is Strategy.PLUG_IN:
        d = exp_exact_design(target, rate_hat)
        return DesignResult(np.array([d]), d, (exp_reliability(d, rate_hat),), (_no_margin(),), True, 1)
    draws = np.asarray(rate_draws, dtype=float)
    d_hi = 60.0 / min(draws.min(), rate_hat)

    if strategy is Strategy.CRI:
        def r_alpha(d):
            return cri_quantile_from_samples(exp_reliability(d, draws), alpha, convention).value

        d = optimize.brentq(lambda d: r_alpha(d) - target, 0.0, d_hi, xtol=1e-14, rtol=1e-15)
        return DesignResult(np.array([d]), d, (exp_reliability(d, rate_hat),),
                            (MarginValue(MarginKind.CRI, r_alpha(d)),), True, 1)

    if strategy is Strategy.MIP:
        ref = rate_hat if reference_rate is None else reference_rate

        def p_of(d):
            q = cri_quantile_from_samples(exp_reliability(d, draws), alpha, "below").value
            return q - exp_reliability(d, ref)

        d = optimize.brentq(lambda d: exp_reliability(d, rate_hat) - p_of(d) - target,
                            0.0, d_hi, xtol=1e-14, rtol=1e-15)
        p = p_of(d)
        check_mip_compatible(target, p)
        return DesignResult(np.array([d]), d, (exp_reliability(d, rate_hat),),
                            (MarginValue(MarginKind.MIP, p),), True, 1)
    raise UnsupportedModeError(f"strategy {strategy.value} is not available for the threshold problem")


def solve_exp_threshold(strategy: StrategyConfig, samples, F_target: float,
                        alpha: Optional[float] = None, *, stream: Optional[SeededStream] = None,
                        truth_rate: Optional[float] = None) -> DesignResult:
    """Threshold design from exponential samples.

    CRI draws bootstrap rates around the estimate. MIP with
    ``margin_model="exact"`` draws around ``truth_rate`` instead.
    """
    est = fit_exponential_rate(samples)
    rate_hat = float(est.theta_hat[0])
    alpha = strategy.confidence if alpha is None else alpha
    s = strategy.strategy
    if s is Strategy.PLUG_IN:
        return exp_threshold_design(s, rate_hat, [rate_hat], F_target, alpha)
    if stream is None:
        raise ParameterDomainError(f"{s.value} needs a stream")
    ref = rate_hat
    if s is Strategy.MIP and strategy.margin_model == "exact":
        if truth_rate is None:
            raise ParameterDomainError("exact MIP needs truth_rate")
        ref = truth_rate
    draws = exp_rate_draws(ref, est.m, strategy.n_outer, stream)
    return exp_threshold_design(s, rate_hat, draws, F_target, alpha,
                                strategy.cri_convention, reference_rate=ref)


# ------------------------------------------------------- Monte Carlo RBDO


def _estimate_mapping(problem: DesignProblem, estimates) -> dict:
    if isinstance(estimates, ParamEstimate):
        return {problem.estimated_names[0]: estimates}
    return dict(estimates)


def _with_basis_values(problem, batch: SampleBatch, estimates: dict, basis) -> SampleBatch:
    X = dict(batch.X)
    for name in problem.estimated_names:
        B = basis_value(estimates[name], *basis)
        if B.value <= 0:
            raise NonphysicalBasisError(f"basis value for {name} is not positive")
        X[name] = np.full(batch.n, B.value)
    return SampleBatch(X, batch.scores, batch.n)


def _bootstrap_log_weights(problem, batch: SampleBatch, estimates: dict, k: int,
                           stream: SeededStream) -> np.ndarray:
    """Log likelihood ratios of the batch under ``k`` bootstrap parameter draws."""
    logw = np.zeros((batch.n, k))
    for i, name in enumerate(problem.estimated_names):
        est = estimates[name]
        gen = stream.child(i).generator()
        x = batch.X[name][:, None]
        if est.family is Family.NORMAL:
            mu, var = est.theta_hat
            means = mu + math.sqrt(var / est.m) * gen.standard_normal(k)
            variances = var * gen.chisquare(est.m - 1, k) / (est.m - 1)
            logw += (-0.5 * np.log(variances) - 0.5 * (x - means) ** 2 / variances
                     + 0.5 * math.log(var) + 0.5 * (x - mu) ** 2 / var)
        else:
            lam = est.theta_hat[0]
            rates = exp_rate_draws(lam, est.m, k, stream.child(i))
            logw += np.log(rates / lam) - (rates - lam) * x
    return logw


class _ConstraintSet:
    """Quantile-form constraints ``q_j(d) - shift_j >= 0`` on a fixed batch."""

    def __init__(self, problem: DesignProblem, batch: SampleBatch, targets, shifts):
        self.problem = problem
        self.batch = batch
        self.targets = np.asarray(targets, dtype=float)
        self.shifts = np.asarray(shifts, dtype=float)

    def values(self, d) -> np.ndarray:
        return np.array([
            pma_quantile(self.batch.limit_values(self.problem, d, j), self.targets[j]) - self.shifts[j]
            for j in range(self.problem.n_limit_states)
        ])

    def worst(self, d) -> float:
        return float(self.values(d).min())


def _min_monotone(cons: _ConstraintSet, d, idx: int) -> Optional[float]:
    """Smallest feasible value of coordinate ``idx`` with the others fixed."""
    lo, hi = cons.problem.bounds[idx]
    x = np.array(d, dtype=float)

    def f(v):
        x[idx] = v
        return cons.worst(x)

    if f(hi) < 0:
        return None
    if f(lo) >= 0:
        return lo
    root = optimize.brentq(f, lo, hi, xtol=1e-10, rtol=1e-12)
    # step to the feasible side of the root
    while f(root) < 0 and root < hi:
        root = min(hi, root + 1e-10 * max(1.0, abs(root)))
    return root


def _pattern_search(fun, x0, lower, upper, step0, min_step, diagonals=True):
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    fx = fun(x)
    dim = x.size
    dirs = [v for i in range(dim) for v in (np.eye(dim)[i], -np.eye(dim)[i])]
    if diagonals and dim > 1:
        for signs in np.array(np.meshgrid(*[[-1.0, 1.0]] * dim)).T.reshape(-1, dim):
            dirs.append(signs / math.sqrt(dim))
    span = upper - lower
    step = step0
    while step >= min_step:
        improved = False
        for u in dirs:
            y = np.clip(x + step * u * span / max(span.max(), 1e-300), lower, upper)
            fy = fun(y)
            if fy < fx:
                x, fx, improved = y, fy, True
                break
        if not improved:
            step *= 0.5
    return x, fx


def _design_step(cons: _ConstraintSet, opt: OptimizerConfig) -> Optional[np.ndarray]:
    problem = cons.problem
    lower, upper = problem.lower, problem.upper
    idx = problem.monotone_index
    if idx is not None:
        others = [i for i in range(problem.design_dim) if i != idx]

        def complete(y):
            d = np.empty(problem.design_dim)
            d[others] = y
            d[idx] = lower[idx]
            v = _min_monotone(cons, d, idx)
            if v is None:
                return None
            d[idx] = v
            return d

        def phi(y):
            d = complete(np.atleast_1d(y))
            return math.inf if d is None else problem.cost(d)

        if not others:
            return complete(np.empty(0))
        lo_o, hi_o = lower[others], upper[others]
        if len(others) == 1:
            grid = np.linspace(lo_o[0], hi_o[0], 4 * opt.multistart + 1)
            vals = np.array([phi(g) for g in grid])
            if not np.isfinite(vals).any():
                return None
            k = int(np.argmin(vals))
            a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
            # finite stand-in for infeasible points keeps Brent's parabola arithmetic clean
            top = float(vals[np.isfinite(vals)].max())
            cap = top + 1.0 + abs(top)
            res = optimize.minimize_scalar(lambda y: min(phi(y), cap), bounds=(a, b), method="bounded",
                                           options={"xatol": 1e-7})
            y = res.x if res.fun <= vals[k] else grid[k]
            return complete(np.atleast_1d(y))
        best, best_val = None, math.inf
        for s in np.linspace(0.1, 0.9, opt.multistart):
            y, val = _pattern_search(phi, lo_o + s * (hi_o - lo_o), lo_o, hi_o,
                                     opt.initial_step, opt.min_step)
            if val < best_val:
                best, best_val = y, val
        return None if best is None or not math.isfinite(best_val) else complete(best)

    # generic fallback: exact penalty on normalized violations
    mid = 0.5 * (lower + upper)
    scale = np.array([max(np.std(cons.batch.limit_values(problem, mid, j)), 1e-12)
                      for j in range(problem.n_limit_states)])

    def penalized(d):
        viol = np.maximum(0.0, -cons.values(d)) / scale
        return problem.cost(d) + opt.penalty * float(viol.sum())

    best, best_val = None, math.inf
    for s in np.linspace(0.1, 0.9, opt.multistart):
        d, val = _pattern_search(penalized, lower + s * (upper - lower), lower, upper,
                                 opt.initial_step, opt.min_step)
        if cons.worst(d) >= -1e-9 * scale.max() and val < best_val:
            best, best_val = d, val
    return best


def _update_margins(strategy: Strategy, cons: _ConstraintSet, d, base_targets, cov,
                    config: StrategyConfig, estimates, boot_w):
    """New (targets, shifts) and margin records evaluated at design ``d``."""
    problem, batch = cons.problem, cons.batch
    K = problem.n_limit_states
    targets = np.array(base_targets, dtype=float)
    shifts = np.zeros(K)
    margins = []
    for j in range(K):
        if strategy is Strategy.MIL:
            lm = mc_limit_mean_gradient(problem, j, d, None, batch.n, None, batch=batch)
            mv = mil_margin_delta(lm.grad_theta, cov, config.confidence)
            shifts[j] = mv.value
        elif strategy is Strategy.MIP:
            est = mc_reliability(problem, j, d, None, batch.n, None,
                                 centered=config.centered_gradient, batch=batch)
            mv = mip_margin_delta(est.grad_theta, cov, config.confidence)
            if config.mc_error_in_margin:
                tau = math.hypot(mv.std, est.std_err)
                mv = MarginValue(MarginKind.MIP, normal_quantile(config.confidence) * tau, tau)
            targets[j] = check_mip_compatible(base_targets[j], mv.value)
        elif strategy is Strategy.PRI:
            est = mc_reliability(problem, j, d, None, batch.n, None, centered=True, batch=batch)
            r_hat = min(max(est.r_hat, 0.5 / batch.n), 1.0 - 0.5 / batch.n)
            sigma = delta_std(beta_gradient(r_hat, est.grad_theta), cov)
            targets[j] = normal_cdf(normal_quantile(base_targets[j]) * math.sqrt(1.0 + sigma**2))
            if targets[j] >= 1.0:
                raise SaturatedProbabilityError("inflated PRI target saturates")
            beta = normal_quantile(r_hat) / math.sqrt(1.0 + sigma**2)
            mv = MarginValue(MarginKind.PRI, beta, sigma)
        elif strategy is Strategy.CRI:
            ind = (batch.limit_values(problem, d, j) > 0).astype(float)
            r_boot = (ind @ boot_w) / boot_w.sum(axis=0)
            r_alpha = cri_quantile_from_samples(r_boot, config.confidence,
                                                config.cri_convention).value
            gap = float(ind.mean()) - r_alpha
            targets[j] = check_mip_compatible(base_targets[j], gap)
            mv = MarginValue(MarginKind.CRI, r_alpha)
        else:
            mv = _no_margin()
        margins.append(mv)
    return targets, shifts, margins


def _applied_margins(strategy, computed, target_gaps, shifts) -> tuple:
    # report the damped values actually in force, with the latest std
    out = []
    for j, mv in enumerate(computed):
        if strategy is Strategy.MIL:
            out.append(MarginValue(MarginKind.MIL, float(shifts[j]), mv.std))
        elif strategy is Strategy.MIP:
            out.append(MarginValue(MarginKind.MIP, float(target_gaps[j]), mv.std))
        elif strategy in (Strategy.PRI, Strategy.CRI):
            out.append(mv)
        else:
            out.append(_no_margin())
    return tuple(out)


def solve_rbdo_mc(problem: DesignProblem, estimates, config: StrategyConfig,
                  stream: SeededStream) -> DesignResult:
    """Monte Carlo reliability-based design with precision margins.

    One batch of ``config.mc_n`` input draws at the estimated laws is reused
    for every analysis and design trial (common random numbers). Each outer
    iteration solves the quantile-form design problem at the current margins,
    then recomputes margins at the new design and blends them in with the
    configured damping. The loop stops once the cost changes by less than
    ``cost_tolerance``.

    Raises
    ------
    IncompatibleMarginError
        When a reliability target plus its margin reaches one.
    """
    strategy = config.strategy
    opt = config.optimizer
    if strategy is Strategy.REGULATED:
        raise UnsupportedModeError("regulated sizing is only defined for the tension problem")
    if config.mc_n < 1000:
        raise DomainError("mc_n must be at least 1000")
    est_map = _estimate_mapping(problem, estimates)
    if config.reliability_target is not None:
        problem = problem.with_targets([config.reliability_target] * problem.n_limit_states)
    base_targets = np.array(problem.targets, dtype=float)

    batch = draw_batch(problem, est_map, config.mc_n, stream.child(0))
    if strategy is Strategy.MIXED_BV:
        batch = _with_basis_values(problem, batch, est_map, config.basis)
    cov = joint_covariance(problem, est_map)
    boot_w = None
    if strategy is Strategy.CRI:
        logw = _bootstrap_log_weights(problem, batch, est_map, config.n_outer, stream.child(1))
        boot_w = np.exp(logw - logw.max(axis=0))

    K = problem.n_limit_states
    targets, shifts = base_targets.copy(), np.zeros(K)
    margins = [_no_margin()] * K
    cost_prev, margin_step = math.inf, math.inf
    w, last_delta = opt.damping, 0.0
    d = None
    for it in range(1, opt.max_outer_iters + 1):
        cons = _ConstraintSet(problem, batch, targets, shifts)
        d = _design_step(cons, opt)
        if d is None:
            raise InfeasibleTargetError("no design within bounds satisfies the constraints")
        cost = problem.cost(d)
        settled = abs(cost - cost_prev) < opt.cost_tolerance and margin_step < opt.cost_tolerance
        if strategy in (Strategy.PLUG_IN, Strategy.MIXED_BV) or settled:
            r_hats = tuple(mc_reliability(problem, j, d, None, batch.n, None, batch=batch).r_hat
                           for j in range(K))
            applied = _applied_margins(strategy, margins, targets - base_targets, shifts)
            return DesignResult(d, float(cost), r_hats, applied, True, it)
        delta = cost - cost_prev if math.isfinite(cost_prev) else 0.0
        if delta * last_delta < 0:
            # a reversal means the discrete ranks are cycling; take smaller steps
            w *= 0.5
        if delta != 0.0:
            last_delta = delta
        cost_prev = cost
        new_t, new_s, margins = _update_margins(strategy, cons, d, base_targets, cov, config,
                                                est_map, boot_w)
        # quantile ranks are discrete, so a flat cost alone does not mean the
        # margins have settled
        margin_step = w * max(np.max(np.abs(new_t - targets)),
                              np.max(np.abs(new_s - shifts) / np.maximum(1.0, np.abs(shifts))))
        targets = (1.0 - w) * targets + w * new_t
        shifts = (1.0 - w) * shifts + w * new_s
    return DesignResult(d, float(problem.cost(d)), (), tuple(margins), False,
                        opt.max_outer_iters, "nonconverged", "outer loop did not settle")
