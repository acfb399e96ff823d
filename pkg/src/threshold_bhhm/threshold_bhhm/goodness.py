"""
Goodness of fit of a fitted hierarchy against the observed conflicts.

The modelled density of a site is the mixture of its per-cycle densities,
weighted by how many conflicts (exceedances for the gpd family) each cycle
contributed.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from evt_common import GpdParams, gpd_cdf, gpd_logpdf, hybrid_cdf, hybrid_logpdf
from scipy.integrate import trapezoid
from scipy.stats import gaussian_kde

from .errors import NumericalError
from .hierarchy import HierarchicalModel

logger = logging.getLogger(__name__)

GRID_POINTS = 512
_GRID_PAD_BANDWIDTHS = 3.0
_P_CEILING = 1.0 - 1e-12


def posterior_point(model: HierarchicalModel, samples: np.ndarray) -> np.ndarray:
    """Posterior mean vector, or the median when the mean leaves the support."""
    theta = samples.mean(axis=0)
    if math.isfinite(model.loglik(theta)):
        return theta
    logger.warning("Posterior mean leaves the support; using the posterior median")
    theta = np.median(samples, axis=0)
    if math.isfinite(model.loglik(theta)):
        return theta
    raise NumericalError("Neither the posterior mean nor the median is inside the support")


def _site_fit_data(model: HierarchicalModel, theta: np.ndarray, s: int):
    """Fitted observations of site s: values, their cycles and the site parameters."""
    params = model.site_params(theta, s)
    if params is None:
        raise NumericalError(f"Coefficients leave the support at site {model.sites[s]}")
    data = model.site_data[s]
    if isinstance(params, GpdParams):
        exceed = data.exceed_mask()
        return data.x[exceed], data.cycle_of[exceed], params
    return data.x, data.cycle_of, params


def _mixture_density(grid: np.ndarray, params, weights: np.ndarray) -> np.ndarray:
    column = grid[:, None]
    with np.errstate(all="ignore"):
        if isinstance(params, GpdParams):
            logpdf = np.asarray(gpd_logpdf(column, params), dtype=float)
        else:
            logpdf = np.asarray(hybrid_logpdf(column, params), dtype=float)
        density = np.exp(logpdf)
    density = np.where(np.isfinite(density), density, 0.0)
    return density @ weights


def density_area_gap(
    model: HierarchicalModel, theta: np.ndarray, s: int, grid_points: int = GRID_POINTS
) -> float:
    """
    Area between the kernel density of site s's data and the fitted mixture.

    Both densities are evaluated on a regular grid spanning the data plus three
    kernel bandwidths either side and the absolute difference is integrated by
    the trapezoid rule. 0 means a perfect match; 2 is the maximum.
    """
    x, cycle_of, params = _site_fit_data(model, theta, s)
    if x.size < 2 or np.ptp(x) == 0:
        raise NumericalError(f"Site {model.sites[s]} has too few distinct values for a density")
    kde = gaussian_kde(x)
    pad = _GRID_PAD_BANDWIDTHS * float(np.sqrt(kde.covariance[0, 0]))
    grid = np.linspace(x.min() - pad, x.max() + pad, grid_points)

    counts = np.bincount(cycle_of, minlength=model.site_data[s].n_cycles).astype(float)
    weights = counts / counts.sum()
    modelled = _mixture_density(grid, params, weights)
    return float(trapezoid(np.abs(kde(grid) - modelled), grid))


@dataclass(frozen=True, slots=True)
class ProbabilityPlotRow:
    site_id: str
    empirical_p: float
    model_p: float
    exp_model: float  # -log(1 - model_p)
    exp_observed: float  # -log(1 - empirical_p)


def probability_plot_rows(
    model: HierarchicalModel, theta: np.ndarray, s: int
) -> list[ProbabilityPlotRow]:
    """P-P pairs (plotting position (i - 0.5)/n) and their standard-exponential Q-Q form."""
    x, cycle_of, params = _site_fit_data(model, theta, s)
    per_obs = params.take(cycle_of)
    if isinstance(params, GpdParams):
        p = np.asarray(gpd_cdf(x, per_obs), dtype=float)
    else:
        p = np.asarray(hybrid_cdf(x, per_obs), dtype=float)
    p = np.minimum(np.sort(np.atleast_1d(p)), _P_CEILING)
    n = p.size
    empirical = (np.arange(1, n + 1) - 0.5) / n
    site = model.sites[s]
    return [
        ProbabilityPlotRow(
            site_id=site,
            empirical_p=float(e),
            model_p=float(m),
            exp_model=float(-np.log1p(-m)),
            exp_observed=float(-np.log1p(-e)),
        )
        for e, m in zip(empirical, p, strict=True)
    ]


@dataclass(frozen=True, slots=True)
class SiteGoodness:
    site_id: str
    n: int
    area_gap: float
    max_pp_gap: float  # largest |model_p - empirical_p|

    def to_dict(self) -> dict:
        return {
            "site_id": self.site_id,
            "n": self.n,
            "area_gap": self.area_gap,
            "max_pp_gap": self.max_pp_gap,
        }


def goodness_of_fit(
    model: HierarchicalModel, theta: np.ndarray
) -> tuple[list[SiteGoodness], list[ProbabilityPlotRow]]:
    """Per-site area gap and P-P rows for every site at one coefficient vector."""
    summaries, rows = [], []
    for s, site in enumerate(model.sites):
        site_rows = probability_plot_rows(model, theta, s)
        gap = density_area_gap(model, theta, s)
        max_gap = max(abs(r.model_p - r.empirical_p) for r in site_rows)
        summaries.append(
            SiteGoodness(site_id=site, n=len(site_rows), area_gap=gap, max_pp_gap=max_gap)
        )
        logger.info(f"Site {site}: density area gap {gap:.4f}, max P-P gap {max_gap:.4f}")
        rows.extend(site_rows)
    return summaries, rows
