import math

import numpy as np
import pytest
from scipy import stats

from precision_margin.exceptions import InsufficientDataError
from precision_margin.rngstat import fit_normal
from precision_margin.tolerance import (
    basis_value,
    k_factor,
    noncentral_t_cdf,
    noncentral_t_quantile,
)


def _k_oracle(P, C, m):
    return stats.nct.ppf(C, m - 1, stats.norm.ppf(P) * math.sqrt(m)) / math.sqrt(m)


class TestNoncentralT:
    @pytest.mark.parametrize("x, df, nc", [(0.0, 5, 0.0), (3.0, 9, 2.5), (25.0, 9, 7.36), (-1.0, 2, 0.5)])
    def test_cdf_matches_scipy(self, x, df, nc):
        assert noncentral_t_cdf(x, df, nc) == pytest.approx(stats.nct.cdf(x, df, nc), abs=1e-8)

    @pytest.mark.parametrize("q, df, nc", [(0.95, 9, 7.36), (0.5, 4, 0.0), (0.05, 30, 3.0)])
    def test_quantile_matches_scipy(self, q, df, nc):
        assert noncentral_t_quantile(q, df, nc) == pytest.approx(stats.nct.ppf(q, df, nc), rel=1e-7)


class TestKFactor:
    @pytest.mark.parametrize("m", [2, 5, 17])
    def test_median_case_is_zero(self, m):
        assert k_factor(0.5, 0.5, m) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("m", [2, 3, 10, 18, 50, 500])
    @pytest.mark.parametrize("P, C", [(0.99, 0.95), (0.9, 0.95), (0.95, 0.5)])
    def test_matches_scipy_nct(self, P, C, m):
        assert k_factor(P, C, m) == pytest.approx(_k_oracle(P, C, m), rel=1e-7)

    def test_decreasing_in_m(self):
        ks = [k_factor(0.99, 0.95, m) for m in range(5, 501, 15)]
        assert np.all(np.diff(ks) < 0)

    def test_monotone_in_levels(self):
        grid = [0.6, 0.8, 0.9, 0.99]
        for m in (5, 30):
            ks = np.array([[k_factor(P, C, m) for C in grid] for P in grid])
            assert np.all(np.diff(ks, axis=0) >= 0)
            assert np.all(np.diff(ks, axis=1) >= 0)

    def test_positive_above_median(self):
        assert k_factor(0.9, 0.9, 4) > 0

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            k_factor(0.99, 0.95, 1)

    def test_a_basis_coverage_m10(self):
        rng = np.random.default_rng(2024)
        x = rng.normal(0.0, 1.0, size=(10**5, 10))
        B = x.mean(axis=1) - k_factor(0.99, 0.95, 10) * x.std(axis=1, ddof=1)
        cov = np.mean(B <= stats.norm.ppf(0.01))
        assert cov == pytest.approx(0.95, abs=0.005)


class TestBasisValue:
    def test_median_basis_is_mean(self):
        est = fit_normal(600 + 60 * np.array([-1.0, 1.0, -1.0, 1.0]) * math.sqrt(3 / 4))
        B = basis_value(est, 0.5, 0.5)
        assert B.value == pytest.approx(600.0)

    def test_composition(self):
        x = np.linspace(-1, 1, 50)
        x = 600 + 60 * x / x.std(ddof=1)
        est = fit_normal(x)
        B = basis_value(est, 0.99, 0.95)
        assert B.k == pytest.approx(k_factor(0.99, 0.95, 50))
        assert B.value == pytest.approx(600 - B.k * 60)
        assert (B.pop_fraction, B.confidence, B.m) == (0.99, 0.95, 50)
