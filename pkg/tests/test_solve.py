import math

import numpy as np
import pytest

from precision_margin.bench import fit_estimates, make_problem, replicate
from precision_margin.exceptions import (
    DomainError,
    IncompatibleMarginError,
    NonphysicalBasisError,
    ParameterDomainError,
    UnsupportedModeError,
)
from precision_margin.margin import MarginKind
from precision_margin.problems import (
    TensionParams,
    exp_exact_design,
    tension_exact_design,
    tension_problem,
)
from precision_margin.reliability import draw_batch
from precision_margin.rngstat import DistributionModel, Family, ParamEstimate, SeededStream, sample
from precision_margin.solve import (
    OptimizerConfig,
    Strategy,
    StrategyConfig,
    exp_rate_draws,
    exp_threshold_design,
    solve_exp_threshold,
    solve_mixed_bv,
    solve_rbdo_mc,
    solve_regulated,
    solve_tension,
)
from precision_margin.tolerance import BasisValue

TRUTH = TensionParams.truth()
LOAD = DistributionModel.normal(100.0, 100.0)


def _truth_estimate(m=100):
    return ParamEstimate(np.array([600.0, 3600.0]), np.diag([36.0, 2 * 3600.0**2 / (m - 1)]), m, Family.NORMAL)


def _sample_estimate(m, seed):
    _, est = fit_estimates(tension_problem(), m, SeededStream(seed))
    return est["U"]


def _basis(value):
    return BasisValue(value, 0.99, 0.95, 10, 1.0)


class TestConfig:
    def test_strategy_coercion(self):
        assert StrategyConfig("mip").strategy is Strategy.MIP
        assert StrategyConfig("mil", confidence=0.9).margin.kind is MarginKind.MIL

    def test_basis_required(self):
        with pytest.raises(ParameterDomainError):
            StrategyConfig("mixed_bv")

    @pytest.mark.parametrize("kwargs", [dict(confidence=1.0), dict(reliability_target=0.0),
                                        dict(margin_model="bogus"), dict(cri_convention="x")])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterDomainError):
            StrategyConfig("plug_in", **kwargs)

    @pytest.mark.parametrize("kwargs", [dict(cost_tolerance=0.0), dict(damping=0.0), dict(multistart=0)])
    def test_optimizer_invalid(self, kwargs):
        with pytest.raises(ParameterDomainError):
            OptimizerConfig(**kwargs)


class TestRegulated:
    def test_example(self):
        assert solve_regulated(_basis(450.0), 100.0).cost == pytest.approx(1 / 3)

    def test_inverse_proportional(self):
        a = solve_regulated(_basis(300.0), 100.0).cost
        assert solve_regulated(_basis(600.0), 100.0).cost == pytest.approx(a / 2)

    def test_independent_of_target(self):
        est = _sample_estimate(30, 1)
        res = [solve_tension(StrategyConfig("regulated", basis=(0.99, 0.95)), est, LOAD, R)
               for R in (0.9, 1 - 1e-7)]
        np.testing.assert_array_equal(res[0].d_star, res[1].d_star)

    def test_nonphysical(self):
        with pytest.raises(NonphysicalBasisError):
            solve_regulated(_basis(-5.0), 100.0)


class TestMixedBV:
    def test_example(self):
        assert solve_mixed_bv(_basis(200.0), LOAD, 0.95).cost == pytest.approx(116.449 / 200, abs=1e-5)

    def test_median_target(self):
        assert solve_mixed_bv(_basis(250.0), LOAD, 0.5).cost == pytest.approx(100 / 250, rel=1e-12)

    def test_deterministic_load(self):
        res = solve_mixed_bv(_basis(250.0), DistributionModel.normal(100.0, 1e-300), 0.999)
        assert res.cost == pytest.approx(100 / 250, rel=1e-12)

    def test_nonphysical(self):
        with pytest.raises(NonphysicalBasisError):
            solve_mixed_bv(_basis(0.0), LOAD, 0.9)


class TestSolveTension:
    def test_plug_in_truth(self):
        res = solve_tension(StrategyConfig("plug_in"), _truth_estimate(), LOAD, 0.95)
        assert res.d_star[0] == pytest.approx(0.033, abs=5e-4)
        assert res.reliabilities[0] == pytest.approx(0.95, abs=1e-9)

    def test_mil_median_equals_plug_in(self):
        est = _sample_estimate(50, 2)
        pi = solve_tension(StrategyConfig("plug_in"), est, LOAD, 0.99)
        mil = solve_tension(StrategyConfig("mil", confidence=0.5), est, LOAD, 0.99)
        assert mil.cost == pytest.approx(pi.cost, rel=1e-14)

    def test_mil_exact_margin(self):
        res = solve_tension(StrategyConfig("mil", margin_model="exact"), _sample_estimate(100, 3),
                            LOAD, 0.99, truth=TRUTH)
        assert res.margins[0].value == pytest.approx(1.6448536269514722 * 6, rel=1e-12)

    @pytest.mark.parametrize("strategy", ["mil", "mip", "pri", "cri"])
    def test_margins_only_tighten(self, strategy):
        est = _sample_estimate(40, 4)
        pi = solve_tension(StrategyConfig("plug_in"), est, LOAD, 0.99)
        res = solve_tension(StrategyConfig(strategy), est, LOAD, 0.99, stream=SeededStream(4))
        assert res.feasible
        assert res.cost >= pi.cost

    def test_mip_fixed_point(self):
        est = _sample_estimate(100, 5)
        res = solve_tension(StrategyConfig("mip"), est, LOAD, 0.99)
        p = res.margins[0].value
        plug = TensionParams(*est.theta_hat, 100.0, 100.0)
        area, _ = tension_exact_design(plug, 0.99 + p)
        assert res.cost == pytest.approx(area, abs=1e-5)
        assert res.reliabilities[0] == pytest.approx(0.99 + p, abs=1e-5)

    def test_mip_incompatible_at_small_m(self):
        cfg = StrategyConfig("mip", reliability_target=1 - 1e-7)
        report = replicate(tension_problem(), cfg, 20, 50, SeededStream(6))
        codes = {r.error_code for r in report.records if not r.feasible}
        assert report.infeasible_fraction > 0
        assert IncompatibleMarginError.code in codes

    def test_mip_exact_needs_truth(self):
        with pytest.raises(ParameterDomainError):
            solve_tension(StrategyConfig("mip", margin_model="exact"), _truth_estimate(), LOAD, 0.99)

    def test_pri_constraint_active(self):
        est = _sample_estimate(60, 7)
        res = solve_tension(StrategyConfig("pri"), est, LOAD, 0.99)
        assert res.margins[0].value == pytest.approx(2.3263478740408408, abs=1e-9)

    def test_cri_constraint_active(self):
        cfg = StrategyConfig("cri", confidence=0.9, n_outer=20000)
        res = solve_tension(cfg, _sample_estimate(60, 8), LOAD, 0.99, stream=SeededStream(8))
        assert res.margins[0].value >= 0.99
        assert res.margins[0].value == pytest.approx(0.99, abs=1e-6)

    def test_deterministic(self):
        cfg = StrategyConfig("cri", n_outer=5000)
        a = solve_tension(cfg, _sample_estimate(30, 9), LOAD, 0.99, stream=SeededStream(9))
        b = solve_tension(cfg, _sample_estimate(30, 9), LOAD, 0.99, stream=SeededStream(9))
        assert a.cost == b.cost


class TestExpThreshold:
    def test_plug_in_is_exact_design(self):
        res = solve_exp_threshold(StrategyConfig("plug_in"), [0.5, 1.5], 0.01)
        assert res.d_star[0] == pytest.approx(exp_exact_design(0.99, 1.0), rel=1e-14)

    def test_perfect_information(self):
        res = exp_threshold_design(Strategy.MIP, 2.0, np.full(100, 2.0), 0.01, 0.9)
        assert res.d_star[0] == pytest.approx(exp_exact_design(0.99, 2.0), rel=1e-10)
        assert res.margins[0].value == pytest.approx(0.0, abs=1e-12)

    def test_cri_more_conservative_under_exceed(self):
        x = sample(DistributionModel.exponential_rate(1.0), 20, SeededStream(10))
        pi = solve_exp_threshold(StrategyConfig("plug_in"), x, 0.01)
        cri = solve_exp_threshold(StrategyConfig("cri", confidence=0.9, n_outer=20000), x, 0.01,
                                  stream=SeededStream(10))
        assert cri.cost > pi.cost

    def test_rate_draws_law(self):
        m = 7
        draws = exp_rate_draws(2.0, m, 10**5, SeededStream(11))
        # E[1 / mean] = rate * m / (m - 1)
        assert draws.mean() == pytest.approx(2.0 * m / (m - 1), rel=0.01)

    def test_bad_failure_target(self):
        with pytest.raises(DomainError):
            exp_threshold_design(Strategy.CRI, 1.0, [1.0], 1.5, 0.9)


class TestSolveRbdoMc:
    def test_tension_plug_in_matches_analytic(self):
        prob = tension_problem(R=0.95)
        res = solve_rbdo_mc(prob, _truth_estimate(), StrategyConfig("plug_in", mc_n=10**5),
                            SeededStream(12))
        t_exact = tension_exact_design(TRUTH, 0.95)[1]
        assert res.feasible
        # PMA rank noise at n = 1e5 moves the thickness by well under one percent
        assert res.d_star[0] == pytest.approx(t_exact, rel=0.01)

    def test_beam_plug_in_near_truth(self):
        prob = make_problem("beam")
        _, est = fit_estimates(prob, 1000, SeededStream(13))
        res = solve_rbdo_mc(prob, est, StrategyConfig("plug_in", mc_n=10**5), SeededStream(13))
        assert res.cost == pytest.approx(9.51, rel=0.02)
        w, t = res.d_star
        assert t == pytest.approx(3.79, rel=0.05)
        assert w == pytest.approx(2.51, rel=0.05)

    def test_beam_margins_tighten_and_deterministic(self):
        prob = make_problem("beam")
        _, est = fit_estimates(prob, 100, SeededStream(14))
        pi = solve_rbdo_mc(prob, est, StrategyConfig("plug_in"), SeededStream(14))
        mip = solve_rbdo_mc(prob, est, StrategyConfig("mip"), SeededStream(14))
        again = solve_rbdo_mc(prob, est, StrategyConfig("mip"), SeededStream(14))
        assert mip.feasible and mip.cost >= pi.cost
        np.testing.assert_array_equal(mip.d_star, again.d_star)
        assert all(m.kind is MarginKind.MIP and m.value > 0 for m in mip.margins)

    def test_feasible_on_fresh_samples(self):
        prob = make_problem("beam")
        _, est = fit_estimates(prob, 100, SeededStream(15))
        cfg = StrategyConfig("plug_in", mc_n=10**4)
        res = solve_rbdo_mc(prob, est, cfg, SeededStream(15))
        batch = draw_batch(prob, est, 4 * cfg.mc_n, SeededStream(99))
        R = prob.targets[0]
        for j in range(2):
            g = batch.limit_values(prob, res.d_star, j)
            r_fresh = np.mean(g > 0)
            se = math.sqrt(R * (1 - R) / cfg.mc_n) + math.sqrt(R * (1 - R) / batch.n)
            assert r_fresh >= R - 3 * se

    def test_regulated_unsupported(self):
        with pytest.raises(UnsupportedModeError):
            solve_rbdo_mc(make_problem("beam"), {}, StrategyConfig("regulated", basis=(0.99, 0.95)),
                          SeededStream(0))

    def test_small_mc_n(self):
        with pytest.raises(DomainError):
            solve_rbdo_mc(tension_problem(), _truth_estimate(), StrategyConfig("plug_in", mc_n=999),
                          SeededStream(0))
