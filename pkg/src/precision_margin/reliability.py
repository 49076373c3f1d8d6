"""Monte Carlo reliability analysis with likelihood-ratio parameter gradients.

A single batch of input draws serves the reliability estimate, its gradient
with respect to the estimated parameters, the limit-state mean gradient and
the quantile used by the performance-measure constraint form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np
from scipy.linalg import block_diag

from .exceptions import DomainError, ParameterDomainError
from .problems import DesignProblem
from .rngstat import ParamEstimate, SeededStream, sample, score

__all__ = [
    "ReliabilityEstimate",
    "LimitMeanGradient",
    "SampleBatch",
    "draw_batch",
    "joint_covariance",
    "mc_reliability",
    "mc_limit_mean_gradient",
    "pma_quantile",
]

Estimates = Union[ParamEstimate, Mapping[str, ParamEstimate], None]


@dataclass(frozen=True, eq=False)
class ReliabilityEstimate:
    r_hat: float
    grad_theta: np.ndarray
    n: int
    std_err: float


@dataclass(frozen=True, eq=False)
class LimitMeanGradient:
    mean_g: float
    grad_theta: np.ndarray
    n: int


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Input draws ``X`` and their scores over the estimated-parameter block.

    ``scores`` has shape ``(n, p)`` with columns ordered by estimated variable
    (in problem order), then by that variable's parameters.
    """

    X: dict
    scores: np.ndarray
    n: int

    def limit_values(self, problem: DesignProblem, d, limit_index: int) -> np.ndarray:
        g = problem.limit_states[limit_index](np.asarray(d, dtype=float), self.X)
        return np.broadcast_to(np.asarray(g, dtype=float), (self.n,))


def _as_mapping(problem: DesignProblem, estimates: Estimates) -> dict:
    names = problem.estimated_names
    if estimates is None:
        return {}
    if isinstance(estimates, ParamEstimate):
        if len(names) != 1:
            raise ParameterDomainError(
                f"problem has {len(names)} estimated variables; pass a mapping of estimates"
            )
        return {names[0]: estimates}
    out = dict(estimates)
    unknown = set(out) - set(names)
    if unknown:
        raise ParameterDomainError(f"estimates given for non-estimated variables {sorted(unknown)}")
    return out


def _sampling_models(problem: DesignProblem, estimates: Estimates) -> dict:
    models = problem.models()
    for name, est in _as_mapping(problem, estimates).items():
        if est.family is not models[name].family:
            raise ParameterDomainError(f"estimate family mismatch for {name}")
        models[name] = est.model()
    return models


def joint_covariance(problem: DesignProblem, estimates: Estimates) -> np.ndarray:
    """Block-diagonal covariance of all estimated parameters, in score order."""
    mapping = _as_mapping(problem, estimates)
    missing = [n for n in problem.estimated_names if n not in mapping]
    if missing:
        raise ParameterDomainError(f"no estimate for {missing}")
    return block_diag(*[mapping[n].cov for n in problem.estimated_names])


def draw_batch(problem: DesignProblem, estimates: Estimates, n: int,
               stream: SeededStream) -> SampleBatch:
    """Draw ``n`` joint input samples at the estimated (or stored) laws.

    Variable ``i`` of the problem draws from ``stream.child(i)``, so that a
    given stream always reproduces the same batch.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    models = _sampling_models(problem, estimates)
    X, cols = {}, []
    for i, var in enumerate(problem.variables):
        x = sample(models[var.name], n, stream.child(i))
        X[var.name] = x
        if var.estimated:
            cols.append(score(models[var.name], x))
    scores = np.hstack(cols) if cols else np.zeros((n, 0))
    return SampleBatch(X, scores, n)


def mc_reliability(problem: DesignProblem, limit_index: int, d, estimate: Estimates,
                   n: int, stream: SeededStream, centered: bool = False,
                   batch: Optional[SampleBatch] = None) -> ReliabilityEstimate:
    """Simple Monte Carlo reliability and its likelihood-ratio gradient.

    Parameters
    ----------
    centered : bool
        Subtract ``r_hat`` from the indicator before weighting by the score.
        The expectation is unchanged because scores have zero mean, but the
        variance is much lower when ``r_hat`` is close to one.
    batch : SampleBatch, optional
        Reuse existing draws instead of sampling from ``stream``.
    """
    if batch is None:
        batch = draw_batch(problem, estimate, n, stream)
    g = batch.limit_values(problem, d, limit_index)
    ind = (g > 0).astype(float)
    r_hat = float(ind.mean())
    weight = ind - r_hat if centered else ind
    grad = weight @ batch.scores / batch.n
    std_err = math.sqrt(r_hat * (1.0 - r_hat) / batch.n)
    return ReliabilityEstimate(r_hat, grad, batch.n, std_err)


def mc_limit_mean_gradient(problem: DesignProblem, limit_index: int, d, estimate: Estimates,
                           n: int, stream: SeededStream,
                           batch: Optional[SampleBatch] = None) -> LimitMeanGradient:
    """Limit-state mean and its score-function gradient, centered by the sample mean."""
    if batch is None:
        batch = draw_batch(problem, estimate, n, stream)
    g = batch.limit_values(problem, d, limit_index)
    mean_g = float(g.mean())
    grad = (g - mean_g) @ batch.scores / batch.n
    return LimitMeanGradient(mean_g, grad, batch.n)


def _pma_index(n: int, R: float) -> int:
    x = (1.0 - R) * n
    # guard against (1 - R) * n landing a hair above an integer
    k = math.ceil(x - 1e-9 * max(1.0, x))
    return min(max(k, 1), n)


def pma_quantile(g_samples, R: float) -> float:
    """Lower order statistic of rank ``ceil((1 - R) n)`` (1-based, clamped)."""
    g = np.asarray(g_samples, dtype=float).ravel()
    if g.size == 0:
        raise DomainError("pma_quantile needs at least one sample")
    if not 0.0 < R < 1.0:
        raise DomainError("R must lie in (0, 1)")
    k = _pma_index(g.size, R)
    return float(np.partition(g, k - 1)[k - 1])
