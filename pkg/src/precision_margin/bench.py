"""Replication harness: synthetic data, repeated designs and their true performance."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Mapping, Optional, Sequence

import numpy as np

from .exceptions import DomainError, PrecisionMarginError, UnsupportedModeError
from .margin import cri_quantile_from_samples, mil_margin_delta, mip_margin_delta
from .problems import (
    DesignProblem,
    TensionParams,
    beam_problem,
    exp_exact_design,
    exp_problem,
    tension_exact_design,
    tension_problem,
    tension_reliability_gradient,
)
from .reliability import draw_batch
from .rngstat import (
    DistributionModel,
    Family,
    ParamEstimate,
    SeededStream,
    fit_exponential_rate,
    fit_normal,
    sample,
)
from .solve import (
    DesignResult,
    Strategy,
    StrategyConfig,
    exp_rate_draws,
    exp_threshold_design,
    solve_exp_threshold,
    solve_rbdo_mc,
    solve_tension,
)

__all__ = [
    "RepRecord",
    "EnsembleReport",
    "effective_margin",
    "effective_reliability",
    "reference_cost",
    "fit_estimates",
    "run_replication",
    "replicate",
    "c2_coverage",
    "variance_balance_study",
    "margin_decay_study",
    "exp_bias_table",
    "make_problem",
]

Z_TWO_SIDED = 1.959963984540054
Z_ONE_SIDED = 1.6448536269514722


def make_problem(name: str, R: Optional[float] = None) -> DesignProblem:
    """Problem by name at its truth laws, optionally with a common target."""
    builders = {"tension": tension_problem, "beam": beam_problem, "exponential": exp_problem}
    if name not in builders:
        raise DomainError(f"unknown problem {name!r}")
    prob = builders[name]()
    if R is not None:
        prob = prob.with_targets([R] * prob.n_limit_states)
    return prob


def effective_margin(cost: float, cost_star: float) -> float:
    """Relative cost excess ``(cost - cost_star) / cost_star``."""
    if not cost_star > 0:
        raise DomainError("cost_star must be positive")
    return (cost - cost_star) / cost_star


def effective_reliability(problem: DesignProblem, d, truth: Optional[Mapping[str, DistributionModel]] = None,
                          mode: str = "analytic", n: int = 100_000,
                          stream: Optional[SeededStream] = None) -> tuple:
    """Reliability of design ``d`` under the true laws, one value per limit state."""
    prob = problem.with_models(truth) if truth else problem
    d = np.asarray(d, dtype=float)
    if mode == "analytic":
        if prob.analytic_reliability is None:
            raise UnsupportedModeError(f"no closed-form reliability for {prob.name}")
        return tuple(float(r) for r in prob.analytic_reliability(d, prob.models()))
    if mode != "mc":
        raise UnsupportedModeError(f"unknown mode {mode!r}")
    if stream is None:
        raise DomainError("mc mode needs a stream")
    batch = draw_batch(prob, None, n, stream)
    return tuple(float(np.mean(batch.limit_values(prob, d, j) > 0)) for j in range(prob.n_limit_states))


@lru_cache(maxsize=32)
def _mc_reference_cost(name: str, targets: tuple, n: int, seed: int) -> float:
    prob = make_problem(name).with_targets(targets)
    # plug-in at the truth: the covariance is never used
    est = {v.name: ParamEstimate(v.model.params, np.eye(v.model.n_params), 10**9, v.model.family)
           for v in prob.variables if v.estimated}
    res = solve_rbdo_mc(prob, est, StrategyConfig(Strategy.PLUG_IN, mc_n=n), SeededStream(seed, 0))
    return res.cost


def reference_cost(problem: DesignProblem, n: int = 200_000, seed: int = 0) -> float:
    """Optimal cost at the true laws (exact where a closed form exists)."""
    if problem.name == "tension":
        params = TensionParams.from_models(problem.models(), problem.metadata.get("r", 1.0))
        return tension_exact_design(params, problem.targets[0])[0]
    if problem.name == "exponential":
        return exp_exact_design(problem.targets[0], problem.variable("X").model.params[0])
    return _mc_reference_cost(problem.name, tuple(problem.targets), n, seed)


def fit_estimates(problem: DesignProblem, m: int, stream: SeededStream,
                  cov_convention: str = "chi2") -> tuple[dict, dict]:
    """Draw ``m`` samples of every estimated variable at its true law and fit."""
    samples, est = {}, {}
    for i, var in enumerate(problem.variables):
        if not var.estimated:
            continue
        x = sample(var.model, m, stream.child(i))
        samples[var.name] = x
        if var.model.family is Family.NORMAL:
            est[var.name] = fit_normal(x, cov_convention)
        else:
            est[var.name] = fit_exponential_rate(x)
    return samples, est


@dataclass(frozen=True, eq=False)
class RepRecord:
    rep: int
    m: int
    strategy: str
    d_star: tuple
    cost: float
    m_eff: float
    r_eff: tuple
    margins: tuple
    feasible: bool
    error_code: str = ""


@dataclass(frozen=True, eq=False)
class EnsembleReport:
    """Replication records plus aggregates over the feasible ones."""

    problem: str
    strategy: str
    m: int
    targets: tuple
    records: tuple
    aggregates: dict = field(default_factory=dict)

    @property
    def coverage(self) -> float:
        return c2_coverage(self, self.targets)

    @property
    def coverage_se(self) -> float:
        c = self.coverage
        return math.sqrt(c * (1.0 - c) / len(self.records))

    @property
    def infeasible_fraction(self) -> float:
        return sum(not r.feasible for r in self.records) / len(self.records)


def _solve_one(problem: DesignProblem, config: StrategyConfig, samples: dict, est: dict,
               stream: SeededStream) -> DesignResult:
    R = problem.targets[0]
    if problem.name == "tension":
        truth = TensionParams.from_models(problem.models(), problem.metadata.get("r", 1.0))
        return solve_tension(config, est["U"], problem.variable("F").model, R,
                             r=truth.r, truth=truth, stream=stream)
    if problem.name == "exponential":
        return solve_exp_threshold(config, samples["X"], 1.0 - R, stream=stream,
                                   truth_rate=problem.variable("X").model.params[0])
    return solve_rbdo_mc(problem, est, config, stream)


def run_replication(problem: DesignProblem, config: StrategyConfig, m: int, rep: int,
                    base: SeededStream, cost_star: float, score_mode: str = "auto",
                    score_n: int = 100_000, cov_convention: str = "chi2") -> RepRecord:
    """One replication: data from ``child(0)``, solver randomness from
    ``child(1)`` and Monte Carlo scoring from ``child(2)`` of stream ``rep``."""
    stream = SeededStream(base.seed, rep, base.path)
    if config.reliability_target is not None:
        problem = problem.with_targets([config.reliability_target] * problem.n_limit_states)
    name = config.strategy.value
    nan_d = (math.nan,) * problem.design_dim
    try:
        samples, est = fit_estimates(problem, m, stream.child(0), cov_convention)
        res = _solve_one(problem, config, samples, est, stream.child(1))
    except PrecisionMarginError as err:
        return RepRecord(rep, m, name, nan_d, math.nan, math.nan,
                         (math.nan,) * problem.n_limit_states, (), False, err.code)
    if not res.feasible:
        return RepRecord(rep, m, name, nan_d, math.nan, math.nan,
                         (math.nan,) * problem.n_limit_states, (), False, res.error_code or "error")
    mode = score_mode
    if mode == "auto":
        mode = "analytic" if problem.analytic_reliability is not None else "mc"
    r_eff = effective_reliability(problem, res.d_star, None, mode, score_n, stream.child(2))
    return RepRecord(rep, m, name, tuple(float(x) for x in res.d_star), float(res.cost),
                     effective_margin(res.cost, cost_star), r_eff,
                     tuple(float(mv.value) for mv in res.margins), True, "")


def _aggregate(records: Sequence[RepRecord]) -> dict:
    ok = [r for r in records if r.feasible]
    out = {"n_reps": len(records), "n_feasible": len(ok),
           "infeasible_fraction": (len(records) - len(ok)) / len(records)}
    if not ok:
        return out
    columns = {"cost": [r.cost for r in ok], "m_eff": [r.m_eff for r in ok]}
    for j in range(len(ok[0].r_eff)):
        columns[f"r_eff_{j + 1}"] = [r.r_eff[j] for r in ok]
    for key, vals in columns.items():
        v = np.asarray(vals, dtype=float)
        mean = float(v.mean())
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
        out[key] = {
            "mean": mean,
            "se": se,
            "ci95_low": mean - Z_TWO_SIDED * se,
            "ci95_high": mean + Z_TWO_SIDED * se,
            "ci95_one_sided_low": mean - Z_ONE_SIDED * se,
            "ci95_one_sided_high": mean + Z_ONE_SIDED * se,
        }
    return out


def replicate(problem: DesignProblem, strategy: StrategyConfig, m: int, reps: int,
              stream: SeededStream, *, cost_star: Optional[float] = None, workers: int = 1,
              score_mode: str = "auto", score_n: int = 100_000,
              cov_convention: str = "chi2") -> EnsembleReport:
    """Run ``reps`` independent replications of one strategy at sample count ``m``.

    ``problem`` carries the true laws. Replication ``k`` uses stream id ``k``
    (with the seed and path of ``stream``), so results do not depend on
    ``workers``.
    """
    if reps < 1:
        raise DomainError("reps must be at least 1")
    prob = problem
    if strategy.reliability_target is not None:
        prob = prob.with_targets([strategy.reliability_target] * prob.n_limit_states)
    if cost_star is None:
        cost_star = reference_cost(prob)
    job = partial(run_replication, prob, strategy, m, base=stream, cost_star=cost_star,
                  score_mode=score_mode, score_n=score_n, cov_convention=cov_convention)
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = tuple(pool.map(job, range(reps), chunksize=max(1, reps // (4 * workers))))
    else:
        records = tuple(job(k) for k in range(reps))
    return EnsembleReport(prob.name, strategy.strategy.value, m, tuple(prob.targets), records,
                          _aggregate(records))


def c2_coverage(report: EnsembleReport, R_target) -> float:
    """Fraction of all replications whose every true reliability reaches the target.

    Infeasible replications count as not covering.
    """
    if not report.records:
        raise DomainError("empty report")
    targets = np.broadcast_to(np.asarray(R_target, dtype=float), (len(report.records[0].r_eff),))
    hits = sum(r.feasible and all(x >= t for x, t in zip(r.r_eff, targets)) for r in report.records)
    return hits / len(report.records)


# --------------------------------------------------------------- studies


def variance_balance_study(grid_m: Sequence[int], grid_n: Sequence[int], reps: int,
                           stream: SeededStream, R: float = 0.99, centered: bool = False,
                           truth: Optional[TensionParams] = None) -> dict:
    """Excess variance of the Monte Carlo delta variance over the analytic one.

    For each ``m`` and each replication a strength estimate is fitted; the
    delta variance ``grad' T grad`` of the tension reliability at the true
    optimum for ``R`` is computed once with the analytic gradient and once
    per ``n`` with the likelihood-ratio gradient (nested prefixes of a single
    batch). Returns ``{(m, n): Var[mc] / Var[analytic]}``.
    """
    truth = truth or TensionParams.truth()
    problem = tension_problem(truth, R)
    _, t_star = tension_exact_design(truth, R)
    d = np.array([t_star])
    n_max = max(grid_n)
    out = {}
    for i, m in enumerate(grid_m):
        exact = np.empty(reps)
        mc = np.empty((len(grid_n), reps))
        for k in range(reps):
            rs = SeededStream(stream.seed, k, stream.path + (i,))
            _, est = fit_estimates(problem, m, rs.child(0))
            e = est["U"]
            plug = TensionParams(e.theta_hat[0], e.theta_hat[1], truth.mu_f, truth.var_f, truth.r)
            grad = tension_reliability_gradient(t_star, plug)
            exact[k] = grad @ e.cov @ grad
            batch = draw_batch(problem, e, n_max, rs.child(1))
            g = batch.limit_values(problem, d, 0)
            ind = (g > 0).astype(float)
            for a, n in enumerate(grid_n):
                w = ind[:n] - ind[:n].mean() if centered else ind[:n]
                gh = w @ batch.scores[:n] / n
                mc[a, k] = gh @ e.cov @ gh
        for a, n in enumerate(grid_n):
            out[(m, n)] = float(np.var(mc[a]) / np.var(exact))
    return out


def margin_decay_study(ms: Sequence[int], reps: int, stream: SeededStream,
                       confidence: float = 0.95, R: float = 0.99) -> dict:
    """Median delta MIL and MIP tension margins over replications, per ``m``.

    MIP margins use the analytic reliability gradient at the plug-in design.
    Returns ``{"m": [...], "mil": [...], "mip": [...], "slope_mil", "slope_mip"}``.
    """
    truth = TensionParams.truth()
    problem = tension_problem(truth, R)
    mil, mip = [], []
    for i, m in enumerate(ms):
        a, b = np.empty(reps), np.empty(reps)
        for k in range(reps):
            _, est = fit_estimates(problem, m, SeededStream(stream.seed, k, stream.path + (i,)))
            e = est["U"]
            a[k] = mil_margin_delta([1.0, 0.0], e.cov, confidence).value
            plug = TensionParams(e.theta_hat[0], e.theta_hat[1], truth.mu_f, truth.var_f, truth.r)
            _, t = tension_exact_design(plug, R)
            b[k] = mip_margin_delta(tension_reliability_gradient(t, plug), e.cov, confidence).value
        mil.append(float(np.median(a)))
        mip.append(float(np.median(b)))
    logm = np.log(np.asarray(ms, dtype=float))
    return {
        "m": list(ms),
        "mil": mil,
        "mip": mip,
        "slope_mil": float(np.polyfit(logm, np.log(mil), 1)[0]),
        "slope_mip": float(np.polyfit(logm, np.log(mip), 1)[0]),
    }


def exp_bias_table(ms: Sequence[int], stream: SeededStream, F_target: float = 0.01,
                   alpha: float = 0.9, n_outer: int = 100_000, rate: float = 1.0,
                   convention: str = "below") -> list:
    """Effective margins of CRI and MIP threshold designs per sample count.

    CRI is evaluated with the estimate equal to the true rate and bootstrap
    draws around it. MIP is evaluated at the estimate equal to the
    ``alpha``-quantile of the sampling distribution of the rate estimate.
    """
    d_star = exp_exact_design(1.0 - F_target, rate)
    rows = []
    for i, m in enumerate(ms):
        draws = exp_rate_draws(rate, m, n_outer, stream.child(i))
        cri = exp_threshold_design(Strategy.CRI, rate, draws, F_target, alpha, convention)
        rate_alpha = cri_quantile_from_samples(draws, alpha, "below").value
        mip = exp_threshold_design(Strategy.MIP, rate_alpha, draws, F_target, alpha,
                                   reference_rate=rate)
        rows.append({
            "m": int(m),
            "d_cri": cri.cost,
            "m_eff_cri": effective_margin(cri.cost, d_star),
            "d_mip": mip.cost,
            "m_eff_mip": effective_margin(mip.cost, d_star),
        })
    return rows
