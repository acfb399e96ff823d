"""Unit tests for the in-repo special functions."""

import math

import numpy as np
import pytest
from evt_common import chi2_cdf, chi2_quantile, ln_gamma, regularized_gamma_p, std_normal_cdf
from evt_common.special import erf, erfc
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats


class TestNormalCdf:
    def test_zero_is_half(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_1_96(self):
        assert std_normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-12)

    @given(st.floats(min_value=-30, max_value=30))
    def test_symmetry(self, x):
        assert std_normal_cdf(x) + std_normal_cdf(-x) == pytest.approx(1.0, abs=1e-14)

    def test_matches_math_erf(self):
        grid = np.linspace(-6, 6, 241)
        expected = [0.5 * math.erfc(-x / math.sqrt(2.0)) for x in grid]
        assert np.allclose(std_normal_cdf(grid), expected, rtol=0, atol=1e-14)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            std_normal_cdf(float("nan"))
        with pytest.raises(ValueError):
            std_normal_cdf([0.0, float("inf")])

    def test_erf_and_erfc_agree_with_math(self):
        for a in (-3.0, -1.0, -0.3, 0.0, 0.7, 1.0, 2.5, 9.0):
            assert erf(a) == pytest.approx(math.erf(a), abs=1e-15)
            assert erfc(a) == pytest.approx(math.erfc(a), rel=1e-13, abs=1e-300)


class TestLnGamma:
    def test_known_values(self):
        assert ln_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
        assert ln_gamma(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), rel=1e-13)
        assert ln_gamma(10.0) == pytest.approx(math.log(362880.0), rel=1e-13)

    def test_relative_error_on_wide_range(self):
        grid = np.geomspace(1e-3, 1e3, 400)
        expected = np.array([math.lgamma(x) for x in grid])
        got = ln_gamma(grid)
        scale = np.maximum(np.abs(expected), 1.0)
        assert np.max(np.abs(got - expected) / scale) < 1e-12

    @pytest.mark.parametrize("x", [0.0, -1.0, -0.5])
    def test_rejects_non_positive(self, x):
        with pytest.raises(ValueError):
            ln_gamma(x)


class TestIncompleteGamma:
    @given(
        st.floats(min_value=0.05, max_value=80.0),
        st.floats(min_value=0.0, max_value=200.0),
    )
    def test_matches_scipy(self, a, x):
        assert regularized_gamma_p(a, x) == pytest.approx(special.gammainc(a, x), abs=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            regularized_gamma_p(0.0, 1.0)
        with pytest.raises(ValueError):
            regularized_gamma_p(1.0, -1.0)


class TestChiSquareQuantile:
    def test_exponential_median(self):
        assert chi2_quantile(0.5, 2) == pytest.approx(2.0 * math.log(2.0), abs=1e-9)

    @pytest.mark.parametrize(
        ("p", "df", "expected"),
        [(0.025, 28, 15.308), (0.975, 30, 46.979)],
    )
    def test_interval_quantiles(self, p, df, expected):
        assert chi2_quantile(p, df) == pytest.approx(expected, abs=0.01)

    @pytest.mark.parametrize("df", range(2, 61))
    def test_round_trip(self, df):
        for p in (0.001, 0.025, 0.3, 0.5, 0.8, 0.975, 0.999):
            x = chi2_quantile(p, df)
            assert chi2_cdf(x, df) == pytest.approx(p, abs=1e-8)
            assert x == pytest.approx(stats.chi2.ppf(p, df), rel=1e-7)

    @pytest.mark.parametrize(("p", "df"), [(0.0, 2), (1.0, 2), (0.5, 0), (0.5, 1.5)])
    def test_rejects_bad_arguments(self, p, df):
        with pytest.raises(ValueError):
            chi2_quantile(p, df)
