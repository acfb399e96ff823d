"""
Recovery of a known generator by full-length fits.

Slow: run with `pytest -m slow`.
"""

import numpy as np
import pytest
from threshold_bhhm.config import GeneratorConfig, McmcConfig, RiskConfig
from threshold_bhhm.diagnostics import DIC_COMPETITIVE, DIC_DECISIVE, compare_models, dic
from threshold_bhhm.hierarchy import HierarchicalModel, LinkSpec
from threshold_bhhm.models import ModelFamily
from threshold_bhhm.risk import posterior_risk
from threshold_bhhm.sampler import fit_posterior
from threshold_bhhm.simulate import simulate

pytestmark = pytest.mark.slow

MCMC = McmcConfig(chains=2, iterations=20_000, burn_in=10_000, seed=2024)

HYBRID_FAMILIES = [f for f in ModelFamily if f.is_hybrid]

# ---- Fixtures ----


@pytest.fixture(scope="module")
def simulation(generator_data):
    return simulate(GeneratorConfig.model_validate(generator_data(seed=41)))


def _fit(simulation, family: ModelFamily):
    spec = LinkSpec.from_mapping({"mu": ["A"]}, family)
    model = HierarchicalModel(simulation.dataset, family, spec)
    return model, fit_posterior(model, MCMC, workers=2)


@pytest.fixture(scope="module")
def lognormal_fit(simulation):
    return _fit(simulation, ModelFamily.LOGNORMAL_GPD)


@pytest.fixture(scope="module")
def family_fits(simulation, lognormal_fit):
    """One fit per hybrid family on the same data."""
    fits = {ModelFamily.LOGNORMAL_GPD: lognormal_fit}
    for family in HYBRID_FAMILIES:
        if family not in fits:
            fits[family] = _fit(simulation, family)
    return fits


# ---- Tests ----


def test_chains_converge(lognormal_fit):
    _, run = lognormal_fit
    assert run.unconverged() == []


def test_acceptance_rates_per_scalar(lognormal_fit):
    _, run = lognormal_fit
    for chain in run.chains:
        assert chain.acceptance.shape == (len(run.names),)
        assert np.all((chain.acceptance >= 0.2) & (chain.acceptance <= 0.6))


def test_threshold_coefficients_are_covered(simulation, lognormal_fit):
    _, run = lognormal_fit
    rows = {r.name: r for r in run.summary}
    truth = simulation.config.coefficients["mu"]
    for site in ("1", "2", "3"):
        row = rows[f"mu.intercept[{site}]"]
        assert row.q025 <= truth.intercept + truth.offsets[site] <= row.q975
    slope = rows["mu.beta[A]"]
    assert slope.q025 <= truth.beta["A"] <= slope.q975


def test_generating_body_is_preferred(family_fits):
    _, lognormal = family_fits[ModelFamily.LOGNORMAL_GPD]
    _, normal = family_fits[ModelFamily.NORMAL_GPD]
    rows = compare_models([lognormal.score("lognormal"), normal.score("normal")])
    assert rows[0].label == "lognormal"
    assert rows[1].delta > DIC_DECISIVE


def test_all_hybrid_families_are_ranked(family_fits):
    scores = [run.score(family.value) for family, (_, run) in family_fits.items()]
    rows = compare_models(scores)
    assert [r.rank for r in rows] == [1, 2, 3, 4, 5]
    assert {r.label for r in rows} == {f.value for f in HYBRID_FAMILIES}
    assert [r.dic for r in rows] == sorted(r.dic for r in rows)
    by_label = {r.label: r for r in rows}
    assert by_label[ModelFamily.LOGNORMAL_GPD.value].delta < DIC_COMPETITIVE
    assert by_label[ModelFamily.NORMAL_GPD.value].delta > DIC_DECISIVE


def test_dic_is_invariant_to_thinning(lognormal_fit):
    model, run = lognormal_fit
    samples = run.pooled_samples()
    loglik = run.pooled_loglik()
    thinned = dic(samples[::2], model.loglik, loglik[::2])
    assert thinned.dic == pytest.approx(run.dic.dic, abs=0.5)


def test_crash_interval_covers_truth(simulation, lognormal_fit):
    model, run = lognormal_fit
    config = RiskConfig(t_hours=simulation.t_hours)
    for report in posterior_risk(run, model, config, simulation.dataset, draws=2_000):
        assert report.ci_lo <= simulation.expected_crashes[report.site] <= report.ci_hi
