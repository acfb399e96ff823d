"""Data models for conflict observations, signal cycles and crash records."""

import hashlib
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from evt_common import BODY_FAMILIES, BodyDistribution

from .errors import InputError

# Covariate symbols and the cycle-record attribute each one reads.
COVARIATES: dict[str, str] = {
    "V": "volume",
    "A": "shockwave_area",
    "P": "platoon_ratio",
}

PET_MAX_SECONDS = 4.0


class ModelFamily(StrEnum):
    """Supported model structures."""

    NORMAL_GPD = "normal-gpd"
    CAUCHY_GPD = "cauchy-gpd"
    LOGISTIC_GPD = "logistic-gpd"
    GAMMA_GPD = "gamma-gpd"
    LOGNORMAL_GPD = "lognormal-gpd"
    GPD = "gpd"  # GPD-only tail above a supplied threshold

    @property
    def body(self) -> type[BodyDistribution] | None:
        if self is ModelFamily.GPD:
            return None
        return BODY_FAMILIES[self.value.removesuffix("-gpd")]

    @property
    def linked(self) -> tuple[str, ...]:
        """Parameters that get a linear predictor, in layout order."""
        if self.body is None:
            return ("phi",)
        return ("mu", "phi", *self.body.LINK_NAMES)

    @property
    def is_hybrid(self) -> bool:
        return self.body is not None


@dataclass(frozen=True, slots=True)
class ConflictObservation:
    """One PET conflict; the model works with the negated value x = -pet."""

    site_id: str
    cycle_id: str
    pet: float

    def __post_init__(self) -> None:
        if not (0.0 < self.pet <= PET_MAX_SECONDS):
            raise InputError(
                f"PET must lie in (0, {PET_MAX_SECONDS}] seconds, got {self.pet} "
                f"(site {self.site_id}, cycle {self.cycle_id})"
            )

    @property
    def x(self) -> float:
        return -self.pet

    @property
    def key(self) -> tuple[str, str]:
        return (self.site_id, self.cycle_id)


@dataclass(frozen=True, slots=True)
class CycleRecord:
    """Covariates of one signal cycle."""

    site_id: str
    cycle_id: str
    volume: float  # vehicles per lane per cycle
    shockwave_area: float  # km*s
    platoon_ratio: float

    def __post_init__(self) -> None:
        for symbol, attr in COVARIATES.items():
            value = getattr(self, attr)
            if not np.isfinite(value) or value < 0:
                raise InputError(
                    f"Covariate {symbol} must be finite and >= 0, got {value} "
                    f"(site {self.site_id}, cycle {self.cycle_id})"
                )

    @property
    def key(self) -> tuple[str, str]:
        return (self.site_id, self.cycle_id)

    def covariate(self, symbol: str) -> float:
        return float(getattr(self, COVARIATES[symbol]))

    def covariate_vector(self) -> np.ndarray:
        return np.array([self.covariate(s) for s in COVARIATES])


@dataclass(frozen=True, slots=True)
class CrashRecord:
    """Observed crash count for one site and year."""

    site_id: str
    year: int
    count: int

    def __post_init__(self) -> None:
        if self.count < 0:
            raise InputError(f"Crash count must be >= 0, got {self.count} ({self.site_id})")


@dataclass(frozen=True)
class SiteSummary:
    """Per-site ingestion summary: counts, PET range and covariate ranges."""

    site_id: str
    n_cycles: int
    n_conflicts: int
    pet_min: float
    pet_max: float
    pet_mean: float
    covariates: dict[str, tuple[float, float, float]]  # symbol -> (min, max, mean)
    crashes: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "site_id": self.site_id,
            "n_cycles": self.n_cycles,
            "n_conflicts": self.n_conflicts,
            "pet": {"min": self.pet_min, "max": self.pet_max, "mean": self.pet_mean},
            "covariates": {
                k: {"min": v[0], "max": v[1], "mean": v[2]} for k, v in self.covariates.items()
            },
            "crashes": {str(k): v for k, v in sorted(self.crashes.items())},
        }


@dataclass(frozen=True)
class Dataset:
    """Validated conflicts, cycles and (optionally) crash records."""

    observations: tuple[ConflictObservation, ...]
    cycles: tuple[CycleRecord, ...]
    crashes: tuple[CrashRecord, ...] = ()
    rejected: int = 0

    @property
    def sites(self) -> tuple[str, ...]:
        """Site ids in order of first appearance in the cycle table."""
        return tuple(dict.fromkeys(c.site_id for c in self.cycles))

    def cycle_index(self) -> dict[tuple[str, str], int]:
        return {c.key: i for i, c in enumerate(self.cycles)}

    def negated_values(self) -> np.ndarray:
        return np.array([o.x for o in self.observations], dtype=float)

    def crashes_by_site(self) -> dict[str, list[CrashRecord]]:
        grouped: dict[str, list[CrashRecord]] = {}
        for record in self.crashes:
            grouped.setdefault(record.site_id, []).append(record)
        return grouped

    def fingerprint(self) -> str:
        """SHA-256 over the canonical cycle and conflict rows."""
        digest = hashlib.sha256()
        for c in self.cycles:
            digest.update(
                f"C|{c.site_id}|{c.cycle_id}|{c.volume!r}|{c.shockwave_area!r}|"
                f"{c.platoon_ratio!r}\n".encode()
            )
        for o in self.observations:
            digest.update(f"O|{o.site_id}|{o.cycle_id}|{o.pet!r}\n".encode())
        return digest.hexdigest()

    def summarize(self) -> list[SiteSummary]:
        """Per-site counts, PET range and covariate ranges."""
        summaries = []
        crashes = self.crashes_by_site()
        for site in self.sites:
            cycles = [c for c in self.cycles if c.site_id == site]
            pets = np.array([o.pet for o in self.observations if o.site_id == site])
            covariates = {}
            for symbol in COVARIATES:
                values = np.array([c.covariate(symbol) for c in cycles])
                covariates[symbol] = (
                    float(values.min()),
                    float(values.max()),
                    float(values.mean()),
                )
            summaries.append(
                SiteSummary(
                    site_id=site,
                    n_cycles=len(cycles),
                    n_conflicts=int(pets.size),
                    pet_min=float(pets.min()) if pets.size else float("nan"),
                    pet_max=float(pets.max()) if pets.size else float("nan"),
                    pet_mean=float(pets.mean()) if pets.size else float("nan"),
                    covariates=covariates,
                    crashes={r.year: r.count for r in crashes.get(site, [])},
                )
            )
        return summaries
