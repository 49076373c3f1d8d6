"""Estimator-style wrappers: ``fit`` on coupon data, read the design off attributes."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .problems import TensionParams, beam_problem
from .rngstat import DistributionModel, SeededStream, fit_normal
from .solve import StrategyConfig, solve_exp_threshold, solve_rbdo_mc, solve_tension

__all__ = ["TensionDesigner", "BeamDesigner", "ThresholdDesigner"]


def _column(X):
    X = check_array(X, ensure_2d=False, ensure_min_samples=2)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single column of measurements, got {X.shape[1]}")
        X = X[:, 0]
    return X


class TensionDesigner(BaseEstimator):
    """Size a tension member from strength coupon measurements.

    Parameters
    ----------
    strategy : str
        One of ``plug_in``, ``regulated``, ``mixed_bv``, ``mil``, ``mip``,
        ``cri``, ``pri``.
    reliability_target : float
    confidence : float
    basis : tuple of float
        ``(pop_fraction, confidence)`` for the basis-value strategies.
    load_mean, load_var : float
        Known normal load law.
    r : float
        Inner radius.
    n_outer : int
        Bootstrap size for ``cri``.
    random_state : int

    Attributes
    ----------
    estimate_ : ParamEstimate
    result_ : DesignResult
    thickness_ : float
    area_ : float
    """

    def __init__(self, strategy="plug_in", reliability_target=0.95, confidence=0.95,
                 basis=(0.99, 0.95), load_mean=100.0, load_var=100.0, r=1.0,
                 n_outer=10_000, random_state=0):
        self.strategy = strategy
        self.reliability_target = reliability_target
        self.confidence = confidence
        self.basis = basis
        self.load_mean = load_mean
        self.load_var = load_var
        self.r = r
        self.n_outer = n_outer
        self.random_state = random_state

    def fit(self, X, y=None):
        x = _column(X)
        self.estimate_ = fit_normal(x)
        cfg = StrategyConfig(self.strategy, confidence=self.confidence,
                             reliability_target=self.reliability_target,
                             basis=tuple(self.basis), n_outer=self.n_outer)
        load = DistributionModel.normal(self.load_mean, self.load_var)
        self.result_ = solve_tension(cfg, self.estimate_, load, r=self.r,
                                     stream=SeededStream(self.random_state))
        self.thickness_ = float(self.result_.d_star[0])
        self.area_ = float(self.result_.cost)
        return self

    def reliability(self, mu_u, var_u):
        """True reliability of the fitted design for a given strength law."""
        from .problems import tension_reliability

        check_is_fitted(self, "result_")
        params = TensionParams(mu_u, var_u, self.load_mean, self.load_var, self.r)
        return float(tension_reliability(self.thickness_, params))


class BeamDesigner(BaseEstimator):
    """Size the cantilever beam from paired modulus and yield-strength coupons.

    ``X`` has two columns: elastic modulus ``E`` and yield strength ``Y``.
    """

    def __init__(self, strategy="plug_in", reliability_target=0.99865, confidence=0.95,
                 basis=(0.99, 0.95), mc_n=10_000, random_state=0):
        self.strategy = strategy
        self.reliability_target = reliability_target
        self.confidence = confidence
        self.basis = basis
        self.mc_n = mc_n
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        if X.shape[1] != 2:
            raise ValueError(f"expected columns (E, Y), got {X.shape[1]} columns")
        self.estimates_ = {"E": fit_normal(X[:, 0]), "Y": fit_normal(X[:, 1])}
        cfg = StrategyConfig(self.strategy, confidence=self.confidence,
                             reliability_target=self.reliability_target,
                             basis=tuple(self.basis), mc_n=self.mc_n)
        self.result_ = solve_rbdo_mc(beam_problem(), self.estimates_, cfg,
                                     SeededStream(self.random_state))
        self.width_, self.thickness_ = (float(v) for v in self.result_.d_star)
        self.cost_ = float(self.result_.cost)
        return self


class ThresholdDesigner(BaseEstimator):
    """Threshold ``d`` keeping an exponential quantity below it with high probability."""

    def __init__(self, strategy="plug_in", failure_target=0.01, alpha=0.9, n_outer=100_000,
                 cri_convention="exceed", random_state=0):
        self.strategy = strategy
        self.failure_target = failure_target
        self.alpha = alpha
        self.n_outer = n_outer
        self.cri_convention = cri_convention
        self.random_state = random_state

    def fit(self, X, y=None):
        x = check_array(X, ensure_2d=False, ensure_min_samples=1)
        x = np.ravel(x)
        cfg = StrategyConfig(self.strategy, confidence=self.alpha, n_outer=self.n_outer,
                             cri_convention=self.cri_convention)
        self.result_ = solve_exp_threshold(cfg, x, self.failure_target,
                                           stream=SeededStream(self.random_state))
        self.threshold_ = float(self.result_.d_star[0])
        return self
