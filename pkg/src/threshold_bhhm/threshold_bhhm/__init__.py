"""Threshold estimation for PET conflicts with hierarchical body+GPD models."""

from .config import GeneratorConfig, McmcConfig, RiskConfig, RunConfig, Settings
from .errors import BhhmError, InputError, NumericalError
from .hierarchy import HierarchicalModel, LinkSpec
from .models import ConflictObservation, CrashRecord, CycleRecord, Dataset, ModelFamily
from .sampler import PosteriorRun, fit_posterior

__all__ = [
    "BhhmError",
    "ConflictObservation",
    "CrashRecord",
    "CycleRecord",
    "Dataset",
    "GeneratorConfig",
    "HierarchicalModel",
    "InputError",
    "LinkSpec",
    "McmcConfig",
    "ModelFamily",
    "NumericalError",
    "PosteriorRun",
    "RiskConfig",
    "RunConfig",
    "Settings",
    "fit_posterior",
]
