"""Unit tests for the synthetic data generator."""

import json
import logging

import numpy as np
import pytest
from threshold_bhhm.config import GeneratorConfig, load_run_config
from threshold_bhhm.errors import InputError
from threshold_bhhm.hierarchy import LinkSpec, link_eval
from threshold_bhhm.models import PET_MAX_SECONDS
from threshold_bhhm.outputs import write_dataset
from threshold_bhhm.simulate import coefficient_set, simulate


def _read_bytes(paths: dict) -> dict:
    return {name: path.read_bytes() for name, path in paths.items()}


def test_same_seed_same_bytes(tmp_path, small_generator):
    first = write_dataset(simulate(small_generator).dataset, tmp_path / "a")
    second = write_dataset(simulate(small_generator).dataset, tmp_path / "b")
    assert _read_bytes(first) == _read_bytes(second)


def test_seed_changes_data(small_generator):
    other = small_generator.model_copy(update={"seed": small_generator.seed + 1})
    assert simulate(small_generator).dataset.fingerprint() != simulate(other).dataset.fingerprint()


def test_values_respect_pet_range(small_simulation):
    pets = np.array([o.pet for o in small_simulation.dataset.observations])
    assert np.all((pets > 0) & (pets <= PET_MAX_SECONDS))
    assert small_simulation.dropped >= 0


def test_truncation_is_reported(caplog, small_generator):
    caplog.set_level(logging.INFO, logger="threshold_bhhm.simulate")
    simulation = simulate(small_generator)
    kept = len(simulation.dataset.observations)
    assert simulation.generated == kept + simulation.dropped
    assert simulation.dropped_fraction == pytest.approx(simulation.dropped / simulation.generated)
    assert f"of {simulation.generated} generated values" in caplog.text

    truncation = simulation.truth("c.csv", "y.csv", "k.csv")["truncation"]
    assert truncation["pet_range"] == [0.0, PET_MAX_SECONDS]
    assert truncation["generated"] == simulation.generated
    assert truncation["dropped"] == simulation.dropped


def test_sites_and_crash_years(small_simulation):
    dataset = small_simulation.dataset
    assert dataset.sites == ("1", "2")
    assert len(dataset.cycles) == 40
    assert [(r.site_id, r.year) for r in dataset.crashes] == [
        ("1", 1), ("1", 2), ("1", 3), ("2", 1), ("2", 2), ("2", 3)
    ]  # fmt: skip
    assert small_simulation.t_hours == {"1": pytest.approx(0.5), "2": pytest.approx(0.5)}
    assert all(v >= 0 for v in small_simulation.expected_crashes.values())


def test_threshold_at_or_above_zero_is_rejected(generator_data):
    data = generator_data(n_sites=1, n_cycles=5)
    data["coefficients"]["mu"]["intercept"] = 0.5
    with pytest.raises(InputError, match="Generator implies threshold"):
        simulate(GeneratorConfig.model_validate(data))


def test_tail_fraction_matches_body_mass(generator_data):
    config = GeneratorConfig.model_validate(generator_data(seed=12))
    result = simulate(config)
    coeffs = coefficient_set(config)
    spec = LinkSpec.from_mapping(config.links(), config.model)
    cycles = {c.key: c for c in result.dataset.cycles}

    params = {key: link_eval(coeffs, cycle, spec, config.model) for key, cycle in cycles.items()}
    above = [o.x > params[o.key].mu for o in result.dataset.observations]
    expected = np.mean([1.0 - params[o.key].body_mass() for o in result.dataset.observations])
    assert np.mean(above) == pytest.approx(expected, abs=0.03)


def test_truth_document_is_a_run_config(tmp_path, small_simulation):
    truth = small_simulation.truth("c.csv", "y.csv", "k.csv")
    path = tmp_path / "truth.json"
    path.write_text(json.dumps(truth), encoding="utf-8")

    config = load_run_config(path)
    assert config.model == small_simulation.config.model
    assert config.links == {"mu": ["A"]}
    assert config.mcmc.seed == small_simulation.config.seed
    assert config.risk.hours_for("2") == pytest.approx(0.5)
    assert config.dataset_fingerprint == small_simulation.dataset.fingerprint()
    assert str(config.conflicts) == "c.csv"
    assert truth["expected_crashes"] == small_simulation.expected_crashes
