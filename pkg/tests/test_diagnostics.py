"""Unit tests for R-hat, posterior summaries, DIC and model comparison."""

import math

import numpy as np
import pytest
from threshold_bhhm.diagnostics import (
    ModelScore,
    compare_models,
    dic,
    gelman_rubin,
    summarize,
)
from threshold_bhhm.errors import InputError, NumericalError

# ---- Fixtures ----


def _make_score(label: str, value: float, fingerprint: str = "abc") -> ModelScore:
    return ModelScore(label=label, model="lognormal-gpd", dic=value, fingerprint=fingerprint)


def _normal_mean_loglik(theta: np.ndarray, groups: list[np.ndarray]) -> float:
    """Unit-variance normal log-likelihood with one mean per group."""
    total = 0.0
    for y, m in zip(groups, theta, strict=True):
        total += -0.5 * float(np.sum((y - m) ** 2)) - 0.5 * y.size * math.log(2.0 * math.pi)
    return total


def _make_normal_mean_posterior(
    k: int, n: int, n_draws: int, rho: float, seed: int
) -> tuple[list[np.ndarray], np.ndarray]:
    """
    Groups of unit-variance data and draws from the flat-prior posterior of their means.

    The draws form an AR(1) chain with lag-one correlation `rho` whose
    stationary law is the exact posterior N(group mean, 1/n).
    """
    rng = np.random.default_rng(seed)
    groups = [rng.normal(loc, 1.0, n) for loc in rng.normal(0.0, 2.0, k)]
    centre = np.array([y.mean() for y in groups])
    sd = 1.0 / math.sqrt(n)
    draws = np.empty((n_draws, k))
    draws[0] = centre + sd * rng.standard_normal(k)
    innovation = sd * math.sqrt(1.0 - rho * rho)
    for t in range(1, n_draws):
        draws[t] = centre + rho * (draws[t - 1] - centre) + innovation * rng.standard_normal(k)
    return groups, draws


# ---- R-hat ----


class TestGelmanRubin:
    def test_identical_chains(self):
        block = np.random.default_rng(0).standard_normal(500)
        chain = np.tile(block, 2)
        assert gelman_rubin([chain, chain.copy()]) <= 1.0 + 1e-6

    def test_independent_chains_converge(self):
        rng = np.random.default_rng(1)
        chains = [rng.standard_normal(2000) for _ in range(4)]
        assert gelman_rubin(chains) < 1.05

    def test_separated_chains(self):
        rng = np.random.default_rng(2)
        chains = [rng.standard_normal(1000), 100.0 + rng.standard_normal(1000)]
        assert gelman_rubin(chains) > 5.0

    def test_drift_within_chain_is_caught(self):
        drift = np.linspace(0.0, 50.0, 1000)
        noise = np.random.default_rng(3).standard_normal((2, 1000))
        assert gelman_rubin([drift + noise[0], drift + noise[1]]) > 1.2

    def test_constant_chains(self):
        assert gelman_rubin([np.ones(20), np.ones(20)]) == 1.0
        assert gelman_rubin([np.ones(20), np.full(20, 2.0)]) == math.inf

    def test_needs_two_chains(self):
        with pytest.raises(ValueError, match="at least 2"):
            gelman_rubin([np.zeros(100)])

    def test_needs_ten_draws(self):
        with pytest.raises(ValueError, match="length"):
            gelman_rubin([np.zeros(9), np.zeros(9)])


# ---- Summaries ----


class TestSummarize:
    def test_constant_trace(self):
        (row,) = summarize(np.full((50, 1), 1.5), ["mu.b"])
        assert (row.mean, row.sd, row.q025, row.q975) == (1.5, 0.0, 1.5, 1.5)

    def test_linear_interpolated_quantiles(self):
        (row,) = summarize(np.arange(1.0, 10_001.0), ["x"])
        assert row.mean == pytest.approx(5000.5)
        assert row.q025 == pytest.approx(250.975, abs=1e-9)
        assert row.q975 == pytest.approx(9750.025, abs=1e-9)

    def test_columns_follow_names(self):
        samples = np.column_stack([np.zeros(10), np.arange(10.0)])
        rows = summarize(samples, ["a", "b"])
        assert [r.name for r in rows] == ["a", "b"]
        assert rows[1].mean == pytest.approx(4.5)

    def test_name_count_mismatch(self):
        with pytest.raises(ValueError, match="names"):
            summarize(np.zeros((5, 2)), ["a"])


# ---- DIC ----


class TestDic:
    def test_degenerate_posterior_has_no_effective_parameters(self):
        result = dic(np.ones((100, 1)), lambda theta: -float(theta[0]) ** 2)
        assert result.pd == 0.0
        assert result.dic == pytest.approx(2.0)
        assert result.plug_in == "mean"

    def test_recorded_loglik_is_used(self):
        samples = np.array([[0.0], [2.0]])
        result = dic(samples, lambda theta: -float(theta[0]) ** 2, loglik=np.array([0.0, -4.0]))
        assert result.dbar == pytest.approx(4.0)
        assert result.pd == pytest.approx(2.0)
        assert result.dic == pytest.approx(6.0)

    def test_median_plug_in_when_mean_leaves_support(self):
        def loglik(theta):
            return -math.inf if abs(theta[0]) < 0.5 else -1.0

        result = dic(np.array([[-1.0], [-1.0], [1.0]]), loglik)
        assert result.plug_in == "median"
        assert result.pd == 0.0

    def test_no_usable_plug_in(self):
        def loglik(theta):
            return -math.inf if abs(theta[0]) < 0.5 else -1.0

        with pytest.raises(NumericalError):
            dic(np.array([[-1.0], [1.0]]), loglik)

    def test_non_finite_draw(self):
        with pytest.raises(ValueError, match="non-finite"):
            dic(np.zeros((2, 1)), lambda theta: 0.0, loglik=np.array([0.0, -math.inf]))

    def test_conjugate_normal_means_have_k_effective_parameters(self):
        groups, draws = _make_normal_mean_posterior(k=3, n=25, n_draws=40_000, rho=0.0, seed=3)
        result = dic(draws, lambda theta: _normal_mean_loglik(theta, groups))
        assert result.pd == pytest.approx(3.0, abs=0.1)
        assert result.dic == pytest.approx(result.dbar + result.pd)

    def test_invariant_to_thinning(self):
        groups, draws = _make_normal_mean_posterior(k=4, n=30, n_draws=40_000, rho=0.5, seed=8)

        def loglik(theta):
            return _normal_mean_loglik(theta, groups)

        every = dic(draws, loglik)
        second = dic(draws[::2], loglik)
        assert second.dic == pytest.approx(every.dic, abs=0.5)
        assert second.pd == pytest.approx(every.pd, abs=0.25)


# ---- Comparison ----


class TestCompareModels:
    def test_competitive(self):
        rows = compare_models([_make_score("b", 103.0), _make_score("a", 100.0)])
        assert [(r.rank, r.label, r.verdict) for r in rows] == [
            (1, "a", "best"),
            (2, "b", "competitive"),
        ]
        assert rows[1].delta == pytest.approx(3.0)

    def test_decisive(self):
        rows = compare_models([_make_score("a", 100.0), _make_score("b", 115.0)])
        assert rows[1].verdict == "decisive"

    def test_inconclusive(self):
        rows = compare_models([_make_score("a", 100.0), _make_score("b", 107.0)])
        assert rows[1].verdict == "inconclusive"

    def test_fingerprint_mismatch(self):
        with pytest.raises(InputError, match="different datasets"):
            compare_models([_make_score("a", 100.0), _make_score("b", 103.0, "xyz")])

    def test_needs_two_runs(self):
        with pytest.raises(InputError):
            compare_models([_make_score("a", 100.0)])
