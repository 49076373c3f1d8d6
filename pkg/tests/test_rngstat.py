import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from precision_margin.exceptions import (
    DegenerateSampleError,
    DomainError,
    InsufficientDataError,
    ParameterDomainError,
    ShapeError,
    SupportError,
)
from precision_margin.rngstat import (
    DistributionModel,
    Family,
    ParamEstimate,
    SeededStream,
    fit_exponential_rate,
    fit_normal,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    pdf,
    sample,
    score,
)


class TestDistributionModel:
    def test_normal_moments(self):
        m = DistributionModel.normal(600.0, 3600.0)
        assert m.family is Family.NORMAL
        assert m.param_names == ("mean", "var")
        assert (m.mean, m.var) == (600.0, 3600.0)

    def test_exponential_moments(self):
        m = DistributionModel.exponential_rate(2.0)
        assert m.n_params == 1
        assert m.mean == pytest.approx(0.5)
        assert m.var == pytest.approx(0.25)

    @pytest.mark.parametrize("bad", [
        lambda: DistributionModel.normal(0.0, 0.0),
        lambda: DistributionModel.normal(0.0, -1.0),
        lambda: DistributionModel.normal(math.nan, 1.0),
        lambda: DistributionModel.exponential_rate(0.0),
        lambda: DistributionModel(Family.NORMAL, (1.0,)),
    ])
    def test_invalid_parameters(self, bad):
        with pytest.raises(ParameterDomainError):
            bad()


class TestSeededStream:
    def test_same_stream_same_draws(self):
        m = DistributionModel.normal(5.0, 1.0)
        a = sample(m, 2, SeededStream(7, 3))
        b = sample(m, 2, SeededStream(7, 3))
        np.testing.assert_array_equal(a, b)

    def test_streams_differ_by_id_and_path(self):
        m = DistributionModel.normal(0.0, 1.0)
        base = sample(m, 5, SeededStream(7, 0))
        assert not np.array_equal(base, sample(m, 5, SeededStream(7, 1)))
        assert not np.array_equal(base, sample(m, 5, SeededStream(7, 0).child(0)))

    def test_child_independent_of_call_order(self):
        m = DistributionModel.normal(0.0, 1.0)
        s = SeededStream(11, 2)
        first = sample(m, 4, s.child(1))
        sample(m, 100, s.child(0))
        np.testing.assert_array_equal(first, sample(m, 4, s.child(1)))

    def test_child_extends_path(self):
        assert SeededStream(1, 2, (3,)).child(4, 5) == SeededStream(1, 2, (3, 4, 5))


class TestSample:
    def test_normal_mean(self):
        x = sample(DistributionModel.normal(600.0, 3600.0), 10**5, SeededStream(1))
        assert abs(x.mean() - 600.0) < 1.0

    def test_exponential_mean(self):
        x = sample(DistributionModel.exponential_rate(2.0), 10**5, SeededStream(2))
        assert abs(x.mean() - 0.5) < 0.01
        assert (x >= 0).all()

    def test_nonpositive_count(self):
        with pytest.raises(DomainError):
            sample(DistributionModel.normal(0.0, 1.0), 0, SeededStream(0))


class TestPdf:
    def test_standard_normal_at_zero(self):
        assert pdf(DistributionModel.normal(0.0, 1.0), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))

    def test_exponential_origin_and_outside(self):
        m = DistributionModel.exponential_rate(1.0)
        assert pdf(m, 0.0) == pytest.approx(1.0)
        assert pdf(m, -1.0) == 0.0

    def test_matches_scipy(self):
        x = np.linspace(400, 800, 7)
        np.testing.assert_allclose(pdf(DistributionModel.normal(600.0, 3600.0), x),
                                   stats.norm(600, 60).pdf(x), rtol=1e-12)

    def test_integrates_to_cdf_difference(self):
        m = DistributionModel.normal(1.0, 4.0)
        x = np.linspace(-2.0, 3.0, 20001)
        area = np.trapezoid(pdf(m, x), x)
        assert area == pytest.approx(stats.norm(1, 2).cdf(3) - stats.norm(1, 2).cdf(-2), abs=1e-3)


class TestScore:
    def test_normal_example(self):
        s = score(DistributionModel.normal(600.0, 3600.0), 660.0)
        np.testing.assert_allclose(s, [1 / 60, 0.0], atol=1e-15)

    def test_normal_mean_component_vanishes_at_mean(self):
        assert score(DistributionModel.normal(3.0, 2.0), 3.0)[0] == 0.0

    def test_exponential_example(self):
        assert score(DistributionModel.exponential_rate(1.0), 1.0)[0] == pytest.approx(0.0, abs=1e-15)

    def test_exponential_outside_support(self):
        with pytest.raises(SupportError):
            score(DistributionModel.exponential_rate(1.0), [-0.5])

    def test_matches_numerical_log_density_derivative(self):
        mu, v, x, h = 2.0, 3.0, 0.7, 1e-6

        def logp(mu, v):
            return stats.norm(mu, math.sqrt(v)).logpdf(x)

        num = [(logp(mu + h, v) - logp(mu - h, v)) / (2 * h), (logp(mu, v + h) - logp(mu, v - h)) / (2 * h)]
        np.testing.assert_allclose(score(DistributionModel.normal(mu, v), x), num, rtol=1e-6)

    @pytest.mark.parametrize("model", [DistributionModel.normal(600.0, 3600.0),
                                       DistributionModel.exponential_rate(0.3)])
    def test_vector_shape(self, model):
        assert score(model, np.ones(3)).shape == (3, model.n_params)

    @pytest.mark.parametrize("model", [DistributionModel.normal(600.0, 3600.0),
                                       DistributionModel.exponential_rate(0.3)])
    def test_zero_mean(self, model):
        n = 10**5
        s = score(model, sample(model, n, SeededStream(5)))
        se = s.std(axis=0) / math.sqrt(n)
        assert (np.abs(s.mean(axis=0)) < 4 * se).all()


class TestFitNormal:
    def test_hand_example(self):
        est = fit_normal([1.0, 2.0, 3.0])
        np.testing.assert_allclose(est.theta_hat, [2.0, 1.0])
        np.testing.assert_allclose(est.cov, np.diag([1 / 3, 1.0]))
        assert est.m == 3

    def test_printed_convention_halves_variance_term(self):
        est = fit_normal([1.0, 2.0, 3.0], cov_convention="printed")
        np.testing.assert_allclose(est.cov, np.diag([1 / 3, 0.5]))

    def test_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            fit_normal([4.2, 4.2])

    def test_too_few(self):
        with pytest.raises(InsufficientDataError):
            fit_normal([1.0])

    def test_large_sample(self):
        x = sample(DistributionModel.normal(600.0, 3600.0), 10**4, SeededStream(3))
        est = fit_normal(x)
        assert abs(est.theta_hat[0] - 600) < 3
        assert abs(est.theta_hat[1] - 3600) < 180

    def test_consistency_in_median(self):
        model = DistributionModel.normal(600.0, 3600.0)
        err_mu, err_var = [], []
        for i, m in enumerate([100, 1000, 10000]):
            ests = [fit_normal(sample(model, m, SeededStream(9, k, (i,)))) for k in range(100)]
            err_mu.append(np.median([abs(e.theta_hat[0] - 600) for e in ests]))
            err_var.append(np.median([abs(e.theta_hat[1] - 3600) for e in ests]))
        assert err_mu[0] > err_mu[1] > err_mu[2]
        assert err_var[0] > err_var[1] > err_var[2]

    def test_model_roundtrip(self):
        est = fit_normal([1.0, 2.0, 4.0])
        assert est.model() == DistributionModel.normal(*est.theta_hat)


class TestFitExponential:
    def test_constant(self):
        assert fit_exponential_rate([2.0, 2.0, 2.0]).theta_hat[0] == pytest.approx(0.5)

    def test_single(self):
        est = fit_exponential_rate([1.0])
        assert est.theta_hat[0] == 1.0
        np.testing.assert_allclose(est.cov, [[1.0]])

    def test_support(self):
        with pytest.raises(SupportError):
            fit_exponential_rate([1.0, 0.0])

    def test_large_sample(self):
        x = sample(DistributionModel.exponential_rate(1.0), 10**5, SeededStream(4))
        assert abs(fit_exponential_rate(x).theta_hat[0] - 1.0) < 0.01


class TestParamEstimate:
    def test_rejects_asymmetric(self):
        with pytest.raises(ParameterDomainError):
            ParamEstimate(np.array([0.0, 1.0]), np.array([[1.0, 0.1], [0.0, 1.0]]), 5, Family.NORMAL)

    def test_rejects_nonpositive_diagonal(self):
        with pytest.raises((ShapeError, ParameterDomainError)):
            ParamEstimate(np.array([0.0, 1.0]), np.diag([1.0, 0.0]), 5, Family.NORMAL)


class TestNormalQuantile:
    @pytest.mark.parametrize("p, z", [(0.5, 0.0), (0.95, 1.6448536269514722)])
    def test_examples(self, p, z):
        assert normal_quantile(p) == pytest.approx(z, abs=1e-12)

    def test_beta_three(self):
        assert normal_quantile(0.99865) == pytest.approx(3.0, abs=1e-3)

    def test_against_ndtri_grid(self):
        p = np.concatenate([np.logspace(-15, -1, 200), np.linspace(0.01, 0.99, 500),
                            1 - np.logspace(-15, -2, 200)])
        np.testing.assert_allclose(normal_quantile(p), special.ndtri(p), rtol=0, atol=1e-9)

    @given(st.floats(min_value=1e-12, max_value=1 - 1e-12))
    @settings(max_examples=300, deadline=None)
    def test_inverts_cdf(self, p):
        assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-9, abs=1e-15)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, math.nan])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            normal_quantile(p)

    def test_pdf(self):
        assert normal_pdf(1.0) == pytest.approx(stats.norm.pdf(1.0), rel=1e-14)
