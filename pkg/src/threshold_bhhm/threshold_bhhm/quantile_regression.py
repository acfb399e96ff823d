"""
Covariate-dependent thresholds by linear quantile regression.

The pinball-loss minimization is solved exactly as a linear program over
[beta, u, v] with X beta + u - v = y and u, v >= 0; HiGHS dual simplex returns
a vertex, i.e. a fit interpolating p observations.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from evt_common import gpd_mle
from scipy import sparse
from scipy.optimize import linprog

from .baselines import longest_agreeing_run
from .errors import InputError, NumericalError
from .models import COVARIATES, Dataset

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.80, 0.825, 0.85, 0.875, 0.90, 0.925, 0.95)
MIN_SCAN_EXCEEDANCES = 30


def pinball_loss(residuals: np.ndarray, alpha: float) -> float:
    """Sum of alpha * r for r >= 0 and (alpha - 1) * r for r < 0."""
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(np.where(r >= 0, alpha * r, (alpha - 1.0) * r)))


def _as_matrix(X: np.ndarray, n: int) -> np.ndarray:
    """Covariate rows as an (n, k) matrix; k may be 0."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.empty((n, 0))
    if X.ndim == 1:
        X = X[:, None]
    return X


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


@dataclass(frozen=True)
class QuantileRegressionFit:
    alpha: float
    coefficients: np.ndarray  # intercept first, then one per covariate
    covariates: tuple[str, ...]
    objective: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        n = X.shape[0] if X.ndim else 0
        return _design(_as_matrix(X, n)) @ self.coefficients

    def coefficient(self, name: str) -> float:
        if name == "intercept":
            return float(self.coefficients[0])
        if name not in self.covariates:
            return math.nan
        return float(self.coefficients[1 + self.covariates.index(name)])


def _polish(design: np.ndarray, y: np.ndarray, beta: np.ndarray, alpha: float) -> np.ndarray:
    """Re-solve the vertex exactly from the p observations the LP interpolates."""
    p = design.shape[1]
    basis = np.argsort(np.abs(y - design @ beta), kind="stable")[:p]
    try:
        exact = np.linalg.solve(design[basis], y[basis])
    except np.linalg.LinAlgError:
        return beta
    if pinball_loss(y - design @ exact, alpha) <= pinball_loss(y - design @ beta, alpha):
        return exact
    return beta


def quantile_regression(
    y: Sequence[float],
    X: np.ndarray,
    alpha: float,
    covariates: Sequence[str] = (),
) -> QuantileRegressionFit:
    """
    Fit the conditional alpha-quantile of y as intercept + X beta.

    Raises:
        InputError: alpha outside (0, 1), mismatched shapes, or a design that is
            not of full column rank.
        NumericalError: the linear program did not solve.
    """
    if not 0.0 < alpha < 1.0:
        raise InputError(f"Quantile level must lie in (0, 1), got {alpha}")
    y = np.asarray(y, dtype=float)
    design = _design(_as_matrix(X, y.size))
    n, p = design.shape
    if n != y.size:
        raise InputError(f"Design has {n} rows but y has {y.size} values")
    if np.linalg.matrix_rank(design) < p:
        raise InputError(f"Design matrix ({n}x{p}, intercept included) is rank deficient")
    names = tuple(covariates) or tuple(f"x{i}" for i in range(1, p))
    if len(names) != p - 1:
        raise InputError(f"{p - 1} covariate columns but {len(names)} names")

    identity = sparse.identity(n, format="csr")
    a_eq = sparse.hstack([sparse.csr_matrix(design), identity, -identity], format="csr")
    cost = np.concatenate([np.zeros(p), np.full(n, alpha), np.full(n, 1.0 - alpha)])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    result = linprog(cost, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs-ds")
    if not result.success:
        raise NumericalError(f"Quantile regression LP failed at alpha={alpha}: {result.message}")

    beta = _polish(design, y, np.asarray(result.x[:p]), alpha)
    return QuantileRegressionFit(
        alpha=alpha,
        coefficients=beta,
        covariates=names,
        objective=pinball_loss(y - design @ beta, alpha),
    )


def conflict_design(dataset: Dataset, covariates: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Negated PET of every conflict and the covariates of its cycle."""
    unknown = [c for c in covariates if c not in COVARIATES]
    if unknown:
        raise InputError(f"Unknown covariates {unknown}")
    cycles = {c.key: c for c in dataset.cycles}
    y = dataset.negated_values()
    X = np.array(
        [[cycles[o.key].covariate(c) for c in covariates] for o in dataset.observations],
        dtype=float,
    ).reshape(len(dataset.observations), len(covariates))
    return y, X


@dataclass(frozen=True)
class QuantileScanRow:
    alpha: float
    fit: QuantileRegressionFit
    n_exceed: int
    sigma: float = math.nan
    xi: float = math.nan
    se_xi: float = math.nan
    flag: str = ""


def quantile_grid_scan(
    y: Sequence[float],
    X: np.ndarray,
    covariates: Sequence[str] = (),
    levels: Sequence[float] = DEFAULT_LEVELS,
) -> list[QuantileScanRow]:
    """
    Regressed threshold surface per level and a GPD fit to the excesses over it.

    Levels with fewer than 30 exceedances are flagged; a failed GPD fit is
    flagged `mle_failed`.
    """
    y = np.asarray(y, dtype=float)
    X = _as_matrix(X, y.size)
    rows = []
    for alpha in levels:
        fit = quantile_regression(y, X, alpha, covariates)
        threshold = fit.predict(X)
        above = y > threshold
        excess = y[above] - threshold[above]
        n = int(excess.size)
        flags = ["few_exceedances"] if n < MIN_SCAN_EXCEEDANCES else []
        try:
            gpd = gpd_mle(excess, 0.0)
        except (ValueError, RuntimeError) as e:
            logger.warning(f"GPD fit above the {alpha:.3f} quantile surface failed: {e}")
            rows.append(QuantileScanRow(alpha, fit, n, flag=";".join([*flags, "mle_failed"])))
            continue
        rows.append(
            QuantileScanRow(
                alpha=alpha,
                fit=fit,
                n_exceed=n,
                sigma=gpd.sigma,
                xi=gpd.xi,
                se_xi=gpd.se_xi,
                flag=";".join(flags),
            )
        )
        logger.info(f"alpha={alpha:.3f}: {n} exceedances, sigma={gpd.sigma:.4f}, xi={gpd.xi:.4f}")
    return rows


def stable_levels(rows: Sequence[QuantileScanRow]) -> tuple[float, float] | None:
    """Range of levels over which the fitted shapes agree within their 95% intervals."""
    run = longest_agreeing_run([r.xi for r in rows], [r.se_xi for r in rows])
    if run is None:
        return None
    start, stop, _, _ = run
    return rows[start].alpha, rows[stop - 1].alpha


def cycle_thresholds(
    fit: QuantileRegressionFit, dataset: Dataset
) -> list[tuple[str, str, float]]:
    """Threshold surface evaluated at every cycle: (site_id, cycle_id, threshold)."""
    X = np.array([[c.covariate(s) for s in fit.covariates] for c in dataset.cycles], dtype=float)
    X = X.reshape(len(dataset.cycles), len(fit.covariates))
    values = fit.predict(X)
    return [(c.site_id, c.cycle_id, float(v)) for c, v in zip(dataset.cycles, values, strict=True)]
