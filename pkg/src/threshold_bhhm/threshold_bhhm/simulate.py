"""
Synthetic conflicts, cycles and crashes from a known hierarchical model.

One generator stream drives everything in a fixed order (per site: covariates,
conflict counts, conflict uniforms, crash counts), so a seed fixes every byte
of the output.
"""

import logging
from dataclasses import dataclass, field, fields

import numpy as np
from evt_common import GpdParams, HybridParams, sample_from_uniforms

from .config import GeneratorConfig, SiteGenerator, build_run_config
from .errors import InputError
from .hierarchy import CoefficientSet, LinkedCoefficients, LinkSpec, link_eval
from .models import (
    COVARIATES,
    PET_MAX_SECONDS,
    ConflictObservation,
    CrashRecord,
    CycleRecord,
    Dataset,
)
from .risk import expected_crashes

logger = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600.0


def coefficient_set(config: GeneratorConfig) -> CoefficientSet:
    """The generating coefficients as a CoefficientSet over the configured sites."""
    sites = [s.site_id for s in config.sites]
    linked = {
        name: LinkedCoefficients(
            intercept=truth.intercept,
            beta=dict(truth.beta),
            offsets={site: truth.offsets.get(site, 0.0) for site in sites},
            delta=truth.delta,
        )
        for name, truth in config.coefficients.items()
        if name in config.model.linked
    }
    return CoefficientSet(linked=linked, xi={site: config.xi[site] for site in sites})


def _stack(params: list[HybridParams]) -> HybridParams:
    """Per-cycle scalar parameter sets as one array-valued HybridParams."""
    body_cls = type(params[0].body)
    body = body_cls(
        *(np.array([getattr(p.body, f.name) for p in params]) for f in fields(body_cls))
    )
    tail = GpdParams(
        mu=np.array([p.tail.mu for p in params]),
        sigma=np.array([p.tail.sigma for p in params]),
        xi=np.array([p.tail.xi for p in params]),
    )
    return HybridParams(body=body, tail=tail)


def _cycle_params(
    coeffs: CoefficientSet, cycles: list[CycleRecord], spec: LinkSpec, config: GeneratorConfig
) -> HybridParams:
    per_cycle = []
    for cycle in cycles:
        try:
            params = link_eval(coeffs, cycle, spec, config.model)
        except ValueError as e:
            raise InputError(
                f"Generator parameters invalid at site {cycle.site_id}, cycle {cycle.cycle_id}: {e}"
            ) from e
        if params.tail.mu >= 0:
            raise InputError(
                f"Generator implies threshold mu = {params.tail.mu:.4f} >= 0 at site "
                f"{cycle.site_id}, cycle {cycle.cycle_id}"
            )
        per_cycle.append(params)
    return _stack(per_cycle)


def _draw_cycles(site: SiteGenerator, rng: np.random.Generator) -> list[CycleRecord]:
    ranges = {symbol: getattr(site, attr) for symbol, attr in COVARIATES.items()}
    draws = {s: rng.uniform(r.low, r.high, site.n_cycles) for s, r in ranges.items()}
    return [
        CycleRecord(
            site_id=site.site_id,
            cycle_id=str(j + 1),
            volume=float(draws["V"][j]),
            shockwave_area=float(draws["A"][j]),
            platoon_ratio=float(draws["P"][j]),
        )
        for j in range(site.n_cycles)
    ]


@dataclass
class Simulation:
    """Generated dataset plus the truth it was generated from."""

    dataset: Dataset
    config: GeneratorConfig
    expected_crashes: dict[str, float] = field(default_factory=dict)  # per T_hours
    t_hours: dict[str, float] = field(default_factory=dict)
    dropped: int = 0  # draws outside the PET range
    generated: int = 0

    @property
    def dropped_fraction(self) -> float:
        return self.dropped / self.generated if self.generated else 0.0

    def truth(self, conflicts: str, cycles: str, crashes: str) -> dict:
        """truth.json content: generator, a matching run config and expected crashes."""
        run = build_run_config(
            {
                "model": str(self.config.model),
                "links": self.config.links(),
                "mcmc": {"seed": self.config.seed},
                "risk": {"t_hours": self.t_hours, "T_hours": self.config.T_hours},
                "conflicts": conflicts,
                "cycles": cycles,
                "crashes": crashes,
                "dataset_fingerprint": self.dataset.fingerprint(),
            }
        )
        return {
            "generator": self.config.model_dump(mode="json"),
            "run": run.model_dump(mode="json"),
            "expected_crashes": self.expected_crashes,
            "truncation": {
                "pet_range": [0.0, PET_MAX_SECONDS],
                "generated": self.generated,
                "dropped": self.dropped,
                "dropped_fraction": self.dropped_fraction,
            },
        }


def simulate(config: GeneratorConfig) -> Simulation:
    """
    Draw a synthetic dataset from the generator.

    Raises:
        InputError: coefficients implying a threshold mu >= 0 (or otherwise
            invalid parameters) in any generated cycle.
    """
    rng = np.random.default_rng(config.seed)
    coeffs = coefficient_set(config)
    spec = LinkSpec.from_mapping(config.links(), config.model)

    all_cycles: list[CycleRecord] = []
    observations: list[ConflictObservation] = []
    crashes: list[CrashRecord] = []
    expected: dict[str, float] = {}
    t_hours: dict[str, float] = {}
    dropped = 0
    generated = 0

    for site in config.sites:
        cycles = _draw_cycles(site, rng)
        params = _cycle_params(coeffs, cycles, spec, config)
        counts = rng.poisson(site.conflicts_per_cycle, site.n_cycles)
        cycle_of = np.repeat(np.arange(site.n_cycles), counts)
        u = rng.random(cycle_of.size)
        x = sample_from_uniforms(u, params.take(cycle_of)) if cycle_of.size else np.empty(0)

        pet = -x
        keep = (pet > 0.0) & (pet <= PET_MAX_SECONDS)
        dropped += int((~keep).sum())
        generated += int(keep.size)
        observations.extend(
            ConflictObservation(site.site_id, cycles[j].cycle_id, float(p))
            for j, p in zip(cycle_of[keep], pet[keep], strict=True)
        )

        hours = site.n_cycles * site.cycle_seconds / SECONDS_PER_HOUR
        annual = expected_crashes(params.tail, hours, config.T_hours)
        t_hours[site.site_id] = hours
        expected[site.site_id] = annual
        yearly = rng.poisson(annual, site.crash_years)
        crashes.extend(
            CrashRecord(site.site_id, year + 1, int(count)) for year, count in enumerate(yearly)
        )
        all_cycles.extend(cycles)
        logger.info(
            f"Site {site.site_id}: {site.n_cycles} cycles, {int(keep.sum())} conflicts, "
            f"expected {annual:.3f} crashes per {config.T_hours:g} h"
        )

    fraction = dropped / generated if generated else 0.0
    message = (
        f"Dropped {dropped} of {generated} generated values ({fraction:.2%}) "
        f"outside PET (0, {PET_MAX_SECONDS}]; conflicts follow the truncated hybrid"
    )
    if dropped:
        logger.warning(message)
    else:
        logger.info(message)
    dataset = Dataset(
        observations=tuple(observations), cycles=tuple(all_cycles), crashes=tuple(crashes)
    )
    return Simulation(
        dataset=dataset,
        config=config,
        expected_crashes=expected,
        t_hours=t_hours,
        dropped=dropped,
        generated=generated,
    )
