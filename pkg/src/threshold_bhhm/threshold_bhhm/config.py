"""Configuration for threshold estimation runs."""

import json
import logging
import tomllib
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import InputError
from .models import COVARIATES, ModelFamily

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-level settings read from BHHM_* environment variables or .env."""

    LOG_LEVEL: str = "INFO"
    OUTPUT_ROOT: Path = Path("runs")
    WORKERS: int = 1  # processes used to run chains in parallel

    model_config = SettingsConfigDict(
        env_prefix="BHHM_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


class McmcConfig(BaseModel):
    """Sampler settings; defaults follow the two-chain 80k/40k protocol."""

    chains: int = Field(default=2, ge=1)
    iterations: int = Field(default=80_000, ge=2)
    burn_in: int = Field(default=40_000, ge=0)
    seed: int = 0
    target_acceptance: float = Field(default=0.44, gt=0.0, lt=1.0)
    adaptation_window: int = Field(default=100, ge=1)
    thinning: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _burn_in_before_end(self) -> "McmcConfig":
        if self.burn_in >= self.iterations:
            raise ValueError(
                f"burn_in ({self.burn_in}) must be smaller than iterations ({self.iterations})"
            )
        return self

    @property
    def kept_per_chain(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thinning))


class RiskConfig(BaseModel):
    """Observation duration t and projection horizon T, both in hours."""

    t_hours: float | dict[str, float] | None = None
    T_hours: float = Field(default=8760.0, gt=0.0)

    def hours_for(self, site: str) -> float:
        if isinstance(self.t_hours, dict):
            if site not in self.t_hours:
                raise InputError(f"No observation duration configured for site {site}")
            hours = self.t_hours[site]
        elif self.t_hours is None:
            raise InputError("Observation duration t_hours is not configured")
        else:
            hours = self.t_hours
        if hours <= 0:
            raise InputError(f"Observation duration must be > 0 hours, got {hours}")
        return float(hours)


class RunConfig(BaseModel):
    """Everything a `fit` run needs; written back as resolved-config.json."""

    model: ModelFamily = ModelFamily.LOGNORMAL_GPD
    links: dict[str, list[str]] = Field(default_factory=dict)
    mcmc: McmcConfig = Field(default_factory=McmcConfig)
    risk: RiskConfig = Field(default_factory=RiskConfig)

    conflicts: Path | None = None
    cycles: Path | None = None
    crashes: Path | None = None
    output_dir: Path | None = None

    # fixed thresholds for the gpd family
    site_thresholds: dict[str, float] = Field(default_factory=dict)
    thresholds_file: Path | None = None

    dataset_fingerprint: str | None = None

    @field_validator("links")
    @classmethod
    def _known_covariates(cls, links: dict[str, list[str]]) -> dict[str, list[str]]:
        for param, covariates in links.items():
            unknown = [c for c in covariates if c not in COVARIATES]
            if unknown:
                raise ValueError(
                    f"Unknown covariates {unknown} for {param}; use any of {list(COVARIATES)}"
                )
            if len(set(covariates)) != len(covariates):
                raise ValueError(f"Duplicate covariates for {param}: {covariates}")
        return links

    @model_validator(mode="after")
    def _links_match_family(self) -> "RunConfig":
        if "xi" in self.links:
            raise ValueError("The shape xi takes no covariates")
        allowed = set(self.model.linked)
        extra = set(self.links) - allowed
        if extra:
            raise ValueError(
                f"{self.model} has no linked parameters {sorted(extra)}; "
                f"choose from {list(self.model.linked)}"
            )
        return self


class CovariateRange(BaseModel):
    low: float = Field(ge=0.0)
    high: float = Field(ge=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "CovariateRange":
        if self.high < self.low:
            raise ValueError(f"Covariate range high ({self.high}) < low ({self.low})")
        return self


class ParameterTruth(BaseModel):
    """Generating coefficients for one linked parameter."""

    intercept: float
    beta: dict[str, float] = Field(default_factory=dict)
    offsets: dict[str, float] = Field(default_factory=dict)
    delta: float = Field(default=0.1, gt=0.0)

    @field_validator("beta")
    @classmethod
    def _known_covariates(cls, beta: dict[str, float]) -> dict[str, float]:
        unknown = [c for c in beta if c not in COVARIATES]
        if unknown:
            raise ValueError(f"Unknown covariates {unknown}")
        return beta


class SiteGenerator(BaseModel):
    site_id: str
    n_cycles: int = Field(default=100, ge=1)
    conflicts_per_cycle: float = Field(default=10.0, gt=0.0)
    cycle_seconds: float = Field(default=90.0, gt=0.0)
    volume: CovariateRange = CovariateRange(low=5.0, high=25.0)
    shockwave_area: CovariateRange = CovariateRange(low=0.5, high=3.5)
    platoon_ratio: CovariateRange = CovariateRange(low=0.5, high=1.5)
    crash_years: int = Field(default=3, ge=1)


class GeneratorConfig(BaseModel):
    """Synthetic data generator: per-site layout plus the true coefficient set."""

    model: ModelFamily = ModelFamily.LOGNORMAL_GPD
    sites: list[SiteGenerator]
    coefficients: dict[str, ParameterTruth]
    xi: dict[str, float]
    seed: int = 0
    T_hours: float = Field(default=8760.0, gt=0.0)

    @model_validator(mode="after")
    def _complete(self) -> "GeneratorConfig":
        if not self.model.is_hybrid:
            raise ValueError("The generator needs a hybrid body+GPD family")
        site_ids = [s.site_id for s in self.sites]
        if len(set(site_ids)) != len(site_ids):
            raise ValueError(f"Duplicate generator site ids: {site_ids}")
        missing = [p for p in self.model.linked if p not in self.coefficients]
        if missing:
            raise ValueError(f"Generator is missing coefficients for {missing}")
        for site in site_ids:
            if site not in self.xi:
                raise ValueError(f"Generator is missing xi for site {site}")
            if not -1.0 < self.xi[site] < 1.0:
                raise ValueError(f"xi for site {site} must lie in (-1, 1)")
        return self

    def links(self) -> dict[str, list[str]]:
        """The link spec implied by the non-zero generating slopes."""
        return {p: list(t.beta) for p, t in self.coefficients.items() if t.beta}


def _read_mapping(path: Path) -> dict[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"Cannot read config file {path}: {e}") from e
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"Cannot parse config file {path}: {e}") from e


def load_run_config(path: Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Load a RunConfig from TOML or JSON, applying CLI overrides on top.

    A simulator truth.json is accepted too: its `run` section is used.
    Overrides use dotted keys for nested fields, e.g. {"mcmc.seed": 7}.
    """
    data = _read_mapping(path) if path is not None else {}
    if "run" in data and "generator" in data:
        data = data["run"]
    return build_run_config(data, overrides)


def build_run_config(data: dict[str, Any], overrides: dict[str, Any] | None = None) -> RunConfig:
    data = json.loads(json.dumps(data, default=str))
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        target = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            target = target.setdefault(key, {})
        target[leaf] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise InputError(f"Invalid run configuration: {e}") from e


def load_generator_config(path: Path) -> GeneratorConfig:
    data = _read_mapping(path)
    if "generator" in data:
        data = data["generator"]
    try:
        return GeneratorConfig.model_validate(data)
    except ValidationError as e:
        raise InputError(f"Invalid generator configuration: {e}") from e
