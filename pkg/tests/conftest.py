"""Shared fixtures: a known lognormal-GPD generator and the data it produces."""

import math

import pytest
from threshold_bhhm.config import GeneratorConfig
from threshold_bhhm.simulate import Simulation, simulate

# ---- Fixtures ----

TRUE_XI = {"1": -0.3, "2": -0.25, "3": -0.3}


def _generator_data(
    n_sites: int = 3,
    n_cycles: int = 100,
    conflicts_per_cycle: float = 10.0,
    seed: int = 0,
) -> dict:
    sites = [str(i) for i in range(1, n_sites + 1)]
    offsets = {"1": -0.05, "2": 0.0, "3": 0.05}
    return {
        "model": "lognormal-gpd",
        "seed": seed,
        "sites": [
            {"site_id": s, "n_cycles": n_cycles, "conflicts_per_cycle": conflicts_per_cycle}
            for s in sites
        ],
        "coefficients": {
            "mu": {
                "intercept": -1.45,
                "beta": {"A": 0.05},
                "offsets": {s: offsets[s] for s in sites},
                "delta": 0.1,
            },
            "phi": {"intercept": -0.8, "delta": 0.1},
            "nu": {"intercept": 0.5, "delta": 0.1},
            "w": {"intercept": math.log(0.4), "delta": 0.1},
        },
        "xi": {s: TRUE_XI[s] for s in sites},
    }


@pytest.fixture(scope="session")
def generator_data():
    """Factory for generator-config mappings (as read from JSON)."""
    return _generator_data


@pytest.fixture
def small_generator() -> GeneratorConfig:
    """Two sites, 20 cycles each: enough for fast fits."""
    return GeneratorConfig.model_validate(
        _generator_data(n_sites=2, n_cycles=20, conflicts_per_cycle=8.0, seed=3)
    )


@pytest.fixture
def small_simulation(small_generator) -> Simulation:
    return simulate(small_generator)


@pytest.fixture
def small_dataset(small_simulation):
    return small_simulation.dataset
