"""
Graphical threshold diagnostics: mean residual life and parameter stability scans.

Both scans only emit plot data. Judging linearity or constancy is left to the
reader; `stability_window` reports where the shape estimates agree.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np
from evt_common import gpd_mle

logger = logging.getLogger(__name__)

Z_95 = 1.96
MIN_MRL_EXCEEDANCES = 5
DEFAULT_GRID_POINTS = 40
DEFAULT_GRID_QUANTILES = (0.50, 0.98)

FLAG_NONE = ""
FLAG_NO_EXCEEDANCES = "no_exceedances"
FLAG_FEW_EXCEEDANCES = "few_exceedances"
FLAG_MLE_FAILED = "mle_failed"

_NAN = float("nan")


@dataclass(frozen=True, slots=True)
class ThresholdScanRow:
    """One candidate threshold of the mean-residual-life / stability scan."""

    threshold: float
    n_exceed: int
    mean_excess: float = _NAN
    me_lo: float = _NAN
    me_hi: float = _NAN
    sigma: float = _NAN
    xi: float = _NAN
    sigma_star: float = _NAN  # modified scale sigma - xi * u
    se_sigma_star: float = _NAN
    se_xi: float = _NAN
    flag: str = FLAG_NONE

    @property
    def xi_interval(self) -> tuple[float, float]:
        return (self.xi - Z_95 * self.se_xi, self.xi + Z_95 * self.se_xi)


def default_grid(
    data: np.ndarray,
    n_points: int = DEFAULT_GRID_POINTS,
    quantiles: tuple[float, float] = DEFAULT_GRID_QUANTILES,
) -> np.ndarray:
    """Equally spaced thresholds between two empirical quantiles."""
    lo, hi = np.quantile(np.asarray(data, dtype=float), quantiles)
    if not hi > lo:
        raise ValueError(f"Degenerate threshold grid: quantiles {quantiles} give {lo}..{hi}")
    return np.linspace(lo, hi, n_points)


def _check_grid(grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("Threshold grid must be a non-empty 1-d sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("Threshold grid must be strictly increasing")
    return grid


def _join_flags(*flags: str) -> str:
    return ";".join(f for f in flags if f)


def mean_residual_life(data: Sequence[float], grid: Sequence[float]) -> list[ThresholdScanRow]:
    """
    Mean excess over each threshold with a normal-approximation 95% band.

    Thresholds with fewer than 5 exceedances are flagged rather than dropped;
    thresholds at or above the sample maximum are flagged `no_exceedances`.
    """
    data = np.asarray(data, dtype=float)
    grid = _check_grid(grid)
    rows = []
    for u in grid:
        excess = data[data > u] - u
        n = int(excess.size)
        if n == 0:
            rows.append(ThresholdScanRow(threshold=float(u), n_exceed=0, flag=FLAG_NO_EXCEEDANCES))
            continue
        mean = float(excess.mean())
        half_width = Z_95 * float(excess.std(ddof=1)) / math.sqrt(n) if n > 1 else _NAN
        rows.append(
            ThresholdScanRow(
                threshold=float(u),
                n_exceed=n,
                mean_excess=mean,
                me_lo=mean - half_width,
                me_hi=mean + half_width,
                flag=FLAG_FEW_EXCEEDANCES if n < MIN_MRL_EXCEEDANCES else FLAG_NONE,
            )
        )
    flagged = sum(1 for r in rows if r.flag)
    if flagged:
        logger.warning(f"Mean residual life: {flagged} of {len(rows)} thresholds flagged")
    return rows


def threshold_stability(data: Sequence[float], grid: Sequence[float]) -> list[ThresholdScanRow]:
    """
    GPD fit above each threshold: shape, modified scale and delta-method errors.

    var(sigma*) = V_ss - 2u V_sx + u^2 V_xx from the (sigma, xi) covariance.
    """
    data = np.asarray(data, dtype=float)
    grid = _check_grid(grid)
    rows = []
    for u in grid:
        n = int(np.sum(data > u))
        if n == 0:
            rows.append(ThresholdScanRow(threshold=float(u), n_exceed=0, flag=FLAG_NO_EXCEEDANCES))
            continue
        try:
            fit = gpd_mle(data, float(u))
        except (ValueError, RuntimeError) as e:
            logger.warning(f"GPD fit failed at threshold {u:.4f}: {e}")
            rows.append(ThresholdScanRow(threshold=float(u), n_exceed=n, flag=FLAG_MLE_FAILED))
            continue
        cov = fit.covariance
        var_star = cov[0, 0] - 2.0 * u * cov[0, 1] + u * u * cov[1, 1]
        rows.append(
            ThresholdScanRow(
                threshold=float(u),
                n_exceed=n,
                sigma=fit.sigma,
                xi=fit.xi,
                sigma_star=fit.sigma - fit.xi * u,
                se_sigma_star=math.sqrt(var_star) if var_star >= 0 else _NAN,
                se_xi=fit.se_xi,
            )
        )
    return rows


def threshold_scan(
    data: Sequence[float], grid: Sequence[float] | None = None
) -> list[ThresholdScanRow]:
    """Mean residual life and stability columns on one grid (the export rows)."""
    data = np.asarray(data, dtype=float)
    grid = default_grid(data) if grid is None else _check_grid(grid)
    merged = []
    mrl_rows = mean_residual_life(data, grid)
    for mrl, stab in zip(mrl_rows, threshold_stability(data, grid), strict=True):
        merged.append(
            replace(
                stab,
                mean_excess=mrl.mean_excess,
                me_lo=mrl.me_lo,
                me_hi=mrl.me_hi,
                flag=_join_flags(*dict.fromkeys((mrl.flag, stab.flag))),
            )
        )
    return merged


@dataclass(frozen=True, slots=True)
class StabilityWindow:
    start: int
    stop: int  # exclusive
    threshold_lo: float
    threshold_hi: float
    xi_lo: float  # common intersection of the shape intervals
    xi_hi: float

    @property
    def n_points(self) -> int:
        return self.stop - self.start


def longest_agreeing_run(
    xi: Sequence[float], se_xi: Sequence[float]
) -> tuple[int, int, float, float] | None:
    """
    Longest contiguous run whose 95% shape intervals share a point.

    Returns (start, stop, lo, hi) with `stop` exclusive and [lo, hi] the common
    intersection. Entries without a finite estimate break a run; ties go to the
    earliest run.
    """
    best = None
    n = len(xi)
    for start in range(n):
        lo, hi = -math.inf, math.inf
        for stop in range(start, n):
            if not (math.isfinite(xi[stop]) and math.isfinite(se_xi[stop])):
                break
            lo = max(lo, xi[stop] - Z_95 * se_xi[stop])
            hi = min(hi, xi[stop] + Z_95 * se_xi[stop])
            if lo > hi:
                break
            if best is None or stop + 1 - start > best[1] - best[0]:
                best = (start, stop + 1, lo, hi)
    return best


def stability_window(rows: Sequence[ThresholdScanRow]) -> StabilityWindow | None:
    """Threshold range over which the stability scan's shape estimates agree."""
    run = longest_agreeing_run([r.xi for r in rows], [r.se_xi for r in rows])
    if run is None:
        return None
    start, stop, lo, hi = run
    return StabilityWindow(
        start=start,
        stop=stop,
        threshold_lo=rows[start].threshold,
        threshold_hi=rows[stop - 1].threshold,
        xi_lo=lo,
        xi_hi=hi,
    )
