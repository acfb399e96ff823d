"""
Crash risk from fitted GPD tails.

A crash corresponds to a negated PET above 0, so the per-cycle risk is the
tail survival at 0, R = (1 + xi * (0 - mu) / sigma) ** (-1 / xi). Tails with
xi < 0 whose endpoint mu - sigma / xi lies below 0 give R = 0 exactly.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from evt_common import GpdParams, chi2_quantile, gpd_sf

from .config import RiskConfig
from .errors import InputError
from .hierarchy import HierarchicalModel
from .models import CrashRecord, Dataset
from .sampler import PosteriorRun

logger = logging.getLogger(__name__)

CRASH_BOUNDARY = 0.0
INTERVAL_LEVELS = (2.5, 97.5)


def cycle_crash_risk(params: GpdParams) -> float | np.ndarray:
    """
    Probability that the negated PET exceeds 0 under one (or many) cycle tails.

    Raises:
        InputError: a threshold at or above 0.
    """
    if np.any(np.asarray(params.mu) >= CRASH_BOUNDARY):
        raise InputError("Crash risk needs thresholds mu < 0 (negated PET)")
    return gpd_sf(CRASH_BOUNDARY, params)


def annualize(risks: np.ndarray | list[float], t: float, T: float) -> float:
    """
    Expected crashes over a horizon T from per-cycle risks observed over t.

    Both durations must share a unit; the CLI uses hours throughout.
    """
    if not t > 0:
        raise InputError(f"Observation duration must be > 0, got {t}")
    if T < 0:
        raise InputError(f"Projection horizon must be >= 0, got {T}")
    return T / t * float(np.sum(risks))


@dataclass(frozen=True, slots=True)
class ObservedCrashes:
    """Observed crash total with the exact Poisson interval on the annual mean."""

    y0: int
    years: int
    mean: float
    ci_lo: float
    ci_hi: float

    def to_dict(self) -> dict:
        return {
            "y0": self.y0,
            "years": self.years,
            "mean": self.mean,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
        }


def poisson_ci(y0: int, n: int) -> tuple[float, float]:
    """
    95% interval for a Poisson annual mean after y0 crashes in n years.

    lower = chi2_0.025(2 y0) / 2n (0 when y0 = 0), upper = chi2_0.975(2 (y0 + 1)) / 2n,
    with lower-tail chi-square quantiles.
    """
    if y0 < 0 or int(y0) != y0:
        raise InputError(f"Crash count must be a non-negative integer, got {y0}")
    if n < 1 or int(n) != n:
        raise InputError(f"Number of years must be a positive integer, got {n}")
    lower = 0.0 if y0 == 0 else chi2_quantile(0.025, 2 * int(y0)) / (2.0 * n)
    upper = chi2_quantile(0.975, 2 * (int(y0) + 1)) / (2.0 * n)
    return lower, upper


def observed(y0: int, years: int) -> ObservedCrashes:
    lo, hi = poisson_ci(y0, years)
    return ObservedCrashes(y0=int(y0), years=int(years), mean=y0 / years, ci_lo=lo, ci_hi=hi)


def observed_from_records(records: list[CrashRecord]) -> ObservedCrashes | None:
    """Pool a site's yearly counts; None without records."""
    if not records:
        return None
    years = len({r.year for r in records})
    return observed(sum(r.count for r in records), years)


@dataclass(frozen=True)
class RiskReport:
    """Posterior crash estimate for one site."""

    site: str
    n_cycles: int
    t_hours: float
    T_hours: float
    crash_mean: float
    ci_lo: float
    ci_hi: float
    cycle_ids: tuple[str, ...] = ()
    cycle_risks: np.ndarray = field(default_factory=lambda: np.empty(0))  # posterior mean R_j
    observed: ObservedCrashes | None = None

    def to_dict(self) -> dict:
        return {
            "site": self.site,
            "n_cycles": self.n_cycles,
            "t_hours": self.t_hours,
            "T_hours": self.T_hours,
            "crash_mean": self.crash_mean,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "observed": self.observed.to_dict() if self.observed else None,
        }


def _draw_indices(total: int, draws: int | None) -> np.ndarray:
    """Evenly spaced draw indices; all draws when `draws` is None or large."""
    if draws is None or draws >= total:
        return np.arange(total)
    if draws < 1:
        raise InputError(f"Number of risk draws must be >= 1, got {draws}")
    return np.unique(np.linspace(0, total - 1, draws).round().astype(int))


def posterior_risk(
    run: PosteriorRun,
    model: HierarchicalModel,
    config: RiskConfig,
    dataset: Dataset | None = None,
    draws: int | None = None,
) -> list[RiskReport]:
    """
    Propagate posterior draws to per-site crash estimates.

    For each draw the coefficients give per-cycle tails, the tails give R_j and
    the risks give C = (T / t) * sum R_j. The report holds the mean of C and
    the empirical 2.5% / 97.5% percentiles of the sorted draws.

    Raises:
        InputError: run and model fitted to different datasets, or a missing
            observation duration.
    """
    if run.fingerprint != model.fingerprint:
        raise InputError(
            f"Run was fitted to dataset {run.fingerprint[:12]}, "
            f"model built from {model.fingerprint[:12]}"
        )
    samples = run.pooled_samples()
    if samples.shape[0] == 0:
        raise InputError("Posterior run has no draws")
    indices = _draw_indices(samples.shape[0], draws)
    hours = {site: config.hours_for(site) for site in model.sites}
    logger.info(f"Propagating {indices.size} posterior draws to crash risk")

    totals = np.empty((indices.size, model.n_sites))
    risk_sums = [np.zeros(d.n_cycles) for d in model.site_data]
    for row, k in enumerate(indices):
        for s, tail in enumerate(model.cycle_tails(samples[k])):
            risks = np.asarray(cycle_crash_risk(tail), dtype=float)
            risk_sums[s] += risks
            totals[row, s] = annualize(risks, hours[model.sites[s]], config.T_hours)

    crashes = dataset.crashes_by_site() if dataset is not None else {}
    reports = []
    for s, data in enumerate(model.site_data):
        values = np.sort(totals[:, s])
        lo, hi = np.percentile(values, INTERVAL_LEVELS)
        report = RiskReport(
            site=data.site_id,
            n_cycles=data.n_cycles,
            t_hours=hours[data.site_id],
            T_hours=config.T_hours,
            crash_mean=float(values.mean()),
            ci_lo=float(lo),
            ci_hi=float(hi),
            cycle_ids=data.cycle_ids,
            cycle_risks=risk_sums[s] / indices.size,
            observed=observed_from_records(crashes.get(data.site_id, [])),
        )
        logger.info(
            f"Site {report.site}: {report.crash_mean:.3f} crashes "
            f"[{report.ci_lo:.3f}, {report.ci_hi:.3f}] over {config.T_hours:g} h"
        )
        reports.append(report)
    return reports


def expected_crashes(tail: GpdParams, t: float, T: float) -> float:
    """Crash count over T implied by known per-cycle tails observed over t."""
    risks = cycle_crash_risk(tail)
    if not math.isfinite(float(np.sum(risks))):
        raise InputError("Non-finite crash risk from the supplied tails")
    return annualize(np.atleast_1d(risks), t, T)
