"""Unit tests for the adaptive Metropolis-within-Gibbs sampler."""

import math

import numpy as np
import pytest
from threshold_bhhm.config import McmcConfig
from threshold_bhhm.errors import NumericalError
from threshold_bhhm.hierarchy import SCOPE_ALL_SITES, HierarchicalModel, LinkSpec
from threshold_bhhm.sampler import (
    START_ATTEMPTS,
    adaptation_gain,
    fit_posterior,
    initial_scales,
    initial_state,
    run_chain,
    sample_chain,
)

# ---- Fixtures ----


class _StandardNormal:
    """One scalar with a standard-normal posterior, split as prior + one site."""

    n_sites = 1
    scopes = np.array([0])

    def log_prior(self, theta):
        return 0.0

    def site_loglik(self, theta, s):
        return -0.5 * float(theta[0]) ** 2


class _TwoScalars:
    """Independent normals; the second scalar touches every site."""

    n_sites = 2
    scopes = np.array([0, SCOPE_ALL_SITES])

    def log_prior(self, theta):
        return -0.5 * float(theta[1]) ** 2

    def site_loglik(self, theta, s):
        return -0.5 * float(theta[0] - 1.0) ** 2 if s == 0 else 0.0


class _Unreachable:
    n_sites = 1
    scopes = np.array([0])

    def log_prior(self, theta):
        return -math.inf

    def site_loglik(self, theta, s):
        return 0.0


def _make_config(**kwargs) -> McmcConfig:
    defaults = {"chains": 2, "iterations": 400, "burn_in": 200, "seed": 11}
    return McmcConfig(**{**defaults, **kwargs})


@pytest.fixture
def model(small_simulation) -> HierarchicalModel:
    config = small_simulation.config
    spec = LinkSpec.from_mapping(config.links(), config.model)
    return HierarchicalModel(small_simulation.dataset, config.model, spec)


# ---- Toy targets ----


def test_standard_normal_moments():
    config = McmcConfig(chains=1, iterations=205_000, burn_in=5_000, seed=1)
    trace = sample_chain(_StandardNormal(), np.array([3.0]), np.array([1.0]), config, 0)
    draws = trace.samples[:, 0]
    assert draws.size == 200_000
    assert draws.mean() == pytest.approx(0.0, abs=0.02)
    assert draws.var() == pytest.approx(1.0, abs=0.05)


def test_scopes_update_cached_site_terms():
    config = McmcConfig(chains=1, iterations=20_000, burn_in=2_000, seed=4)
    trace = sample_chain(_TwoScalars(), np.zeros(2), np.ones(2), config, 0)
    means = trace.samples.mean(axis=0)
    assert means[0] == pytest.approx(1.0, abs=0.1)
    assert means[1] == pytest.approx(0.0, abs=0.1)
    expected = -0.5 * (trace.samples[:, 0] - 1.0) ** 2
    assert np.allclose(trace.loglik, expected)


def test_chain_is_deterministic():
    config = _make_config(iterations=2_000, burn_in=1_000)
    first = sample_chain(_StandardNormal(), np.array([0.5]), np.array([1.0]), config, 1)
    second = sample_chain(_StandardNormal(), np.array([0.5]), np.array([1.0]), config, 1)
    other = sample_chain(_StandardNormal(), np.array([0.5]), np.array([1.0]), config, 2)
    assert np.array_equal(first.samples, second.samples)
    assert not np.array_equal(first.samples, other.samples)


def test_scales_frozen_after_burn_in():
    config = _make_config(iterations=3_000, burn_in=1_000)
    trace = sample_chain(_StandardNormal(), np.array([0.0]), np.array([0.01]), config, 0)
    assert np.array_equal(trace.scales_at_burn_in, trace.final_scales)
    assert trace.final_scales[0] > 0.01
    assert 0.2 <= trace.acceptance[0] <= 0.6


def test_thinning_keeps_every_nth_draw():
    config = _make_config(iterations=1_000, burn_in=500, thinning=10)
    trace = sample_chain(_StandardNormal(), np.array([0.0]), np.array([1.0]), config, 0)
    assert trace.iterations.tolist() == list(range(500, 1_000, 10))


def test_adaptation_gain_decays():
    gains = [adaptation_gain(t, 100) for t in (0, 100, 1_000, 10_000)]
    assert gains == sorted(gains, reverse=True)
    assert gains[0] == pytest.approx(0.5)


def test_non_finite_start():
    with pytest.raises(NumericalError, match="non-finite starting"):
        sample_chain(_Unreachable(), np.zeros(1), np.ones(1), _make_config(), 0)


# ---- Hierarchical model ----


class TestStartingValues:
    def test_start_is_inside_support(self, model):
        theta = initial_state(model, chain_index=0)
        assert math.isfinite(model.log_posterior(theta))
        assert np.all(theta[model.layout.xi_idx] == -0.1)

    def test_chains_are_overdispersed(self, model):
        first = initial_state(model, chain_index=0)
        second = initial_state(model, chain_index=1)
        idx = model.layout.intercept_idx["mu"]
        assert np.allclose(second[idx] - first[idx], 0.25)

    def test_later_attempts_are_more_conservative(self, model):
        first = initial_state(model, chain_index=1, attempt=1)
        last = initial_state(model, chain_index=1, attempt=START_ATTEMPTS)
        idx = model.layout.intercept_idx["mu"]
        assert np.all(last[idx] < first[idx])
        assert np.all(last[model.layout.xi_idx] == 0.1)

    def test_initial_scales_positive(self, model):
        scales = initial_scales(model)
        assert scales.shape == (model.n_params,)
        assert np.all(scales > 0)


def test_run_chain_retries_bad_starts(model, monkeypatch):
    calls = []
    original = model.log_posterior

    def flaky(theta):
        calls.append(1)
        return -math.inf if len(calls) == 1 else original(theta)

    monkeypatch.setattr(model, "log_posterior", flaky)
    trace = run_chain(model, _make_config(iterations=20, burn_in=10), chain_index=0)
    assert len(calls) >= 2
    assert trace.samples.shape == (10, model.n_params)


def test_run_chain_gives_up(model, monkeypatch):
    monkeypatch.setattr(model, "log_posterior", lambda theta: -math.inf)
    with pytest.raises(NumericalError, match="offending component"):
        run_chain(model, _make_config(iterations=20, burn_in=10), chain_index=0)


def test_fit_posterior_small(model):
    config = _make_config()
    run = fit_posterior(model, config)
    assert len(run.chains) == 2
    assert run.pooled_samples().shape == (2 * config.kept_per_chain, model.n_params)
    assert set(run.convergence) == set(model.names)
    assert [row.name for row in run.summary] == model.names
    assert run.dic is not None and math.isfinite(run.dic.dic)
    assert run.fingerprint == model.fingerprint

    again = fit_posterior(model, config)
    assert np.array_equal(run.pooled_samples(), again.pooled_samples())
    assert run.dic == again.dic
