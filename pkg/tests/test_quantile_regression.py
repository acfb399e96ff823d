"""Unit tests for linear quantile regression and the quantile-level scan."""

import itertools

import numpy as np
import pytest
from threshold_bhhm.errors import InputError
from threshold_bhhm.quantile_regression import (
    DEFAULT_LEVELS,
    QuantileRegressionFit,
    QuantileScanRow,
    conflict_design,
    cycle_thresholds,
    pinball_loss,
    quantile_grid_scan,
    quantile_regression,
    stable_levels,
)

# ---- Fixtures ----


def _brute_force_objective(y: np.ndarray, X: np.ndarray, alpha: float) -> float:
    """Best pinball loss over every fit that interpolates p observations."""
    design = np.column_stack([np.ones(y.size), X])
    p = design.shape[1]
    best = np.inf
    for basis in itertools.combinations(range(y.size), p):
        rows = list(basis)
        if abs(np.linalg.det(design[rows])) < 1e-12:
            continue
        beta = np.linalg.solve(design[rows], y[rows])
        best = min(best, pinball_loss(y - design @ beta, alpha))
    return best


def _make_heteroscedastic(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    area = rng.uniform(0.5, 3.5, n)
    y = -1.5 + 0.1 * area + 0.3 * rng.standard_normal(n)
    return y, area[:, None]


# ---- Fitting ----


class TestQuantileRegression:
    def test_matches_vertex_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(4, 9))
            X = rng.standard_normal((n, 2))
            y = rng.standard_normal(n)
            alpha = float(rng.choice([0.5, 0.8, 0.85, 0.95]))
            fit = quantile_regression(y, X, alpha)
            assert fit.objective == pytest.approx(_brute_force_objective(y, X, alpha), abs=1e-9)

    def test_intercept_only_median(self):
        fit = quantile_regression([3.0, 1.0, 2.0], np.empty((3, 0)), 0.5)
        assert fit.coefficient("intercept") == pytest.approx(2.0)
        assert fit.covariates == ()

    @pytest.mark.parametrize("alpha", [0.8, 0.85, 0.95])
    def test_intercept_only_order_statistic(self, alpha):
        y = np.random.default_rng(4).standard_normal(21)
        fit = quantile_regression(y, np.empty((21, 0)), alpha)
        k = int(np.ceil(alpha * y.size)) - 1
        assert fit.coefficient("intercept") == np.sort(y)[k]

    def test_quantile_counts(self):
        y, X = _make_heteroscedastic(400, seed=1)
        for alpha in (0.8, 0.9, 0.95):
            pred = quantile_regression(y, X, alpha, ["A"]).predict(X)
            below = int(np.sum(y < pred - 1e-9))
            above = int(np.sum(y > pred + 1e-9))
            assert below <= alpha * y.size
            assert above <= (1.0 - alpha) * y.size

    def test_predict(self):
        fit = QuantileRegressionFit(
            alpha=0.9,
            coefficients=np.array([-1.2, 0.01, 0.086]),
            covariates=("V", "P"),
            objective=0.0,
        )
        assert fit.predict(np.array([[10.0, 1.0]]))[0] == pytest.approx(-1.014)
        assert fit.coefficient("P") == pytest.approx(0.086)
        assert np.isnan(fit.coefficient("A"))

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_level_outside_unit_interval(self, alpha):
        with pytest.raises(InputError, match="Quantile level"):
            quantile_regression([1.0, 2.0], np.empty((2, 0)), alpha)

    def test_rank_deficient_design(self):
        x = np.arange(6.0)
        with pytest.raises(InputError, match="rank deficient"):
            quantile_regression(np.arange(6.0), np.column_stack([x, 2 * x]), 0.5)

    def test_name_count_mismatch(self):
        with pytest.raises(InputError, match="names"):
            quantile_regression(np.arange(6.0), np.arange(6.0), 0.5, ["V", "A"])


def test_pinball_loss():
    assert pinball_loss(np.array([1.0, -2.0]), 0.9) == pytest.approx(0.9 + 0.2)


# ---- Level scan ----


class TestQuantileGridScan:
    def test_seven_levels(self):
        y, X = _make_heteroscedastic(2000, seed=2)
        rows = quantile_grid_scan(y, X, ["A"])
        assert [r.alpha for r in rows] == list(DEFAULT_LEVELS)
        assert all(r.flag == "" for r in rows)
        counts = [r.n_exceed for r in rows]
        assert counts == sorted(counts, reverse=True)

    def test_sparse_levels_are_flagged(self):
        y, X = _make_heteroscedastic(100, seed=3)
        (row,) = quantile_grid_scan(y, X, ["A"], levels=[0.95])
        assert "few_exceedances" in row.flag
        assert row.n_exceed < 30

    def test_stable_levels(self):
        fit = quantile_regression([1.0, 2.0, 3.0], np.empty((3, 0)), 0.5)
        rows = [
            QuantileScanRow(alpha=a, fit=fit, n_exceed=100, xi=x, se_xi=0.02)
            for a, x in zip((0.8, 0.85, 0.9, 0.95), (-0.3, -0.31, -0.29, 0.2), strict=True)
        ]
        assert stable_levels(rows) == (0.8, 0.9)


# ---- Dataset helpers ----


def test_conflict_design(small_dataset):
    y, X = conflict_design(small_dataset, ["A", "V"])
    assert y.shape == (len(small_dataset.observations),)
    assert X.shape == (y.size, 2)
    assert np.all(y < 0)
    with pytest.raises(InputError, match="Unknown covariates"):
        conflict_design(small_dataset, ["Q"])


def test_cycle_thresholds(small_dataset):
    y, X = conflict_design(small_dataset, ["A"])
    fit = quantile_regression(y, X, 0.85, ["A"])
    rows = cycle_thresholds(fit, small_dataset)
    assert len(rows) == len(small_dataset.cycles)
    site, cycle, value = rows[0]
    first = small_dataset.cycles[0]
    assert (site, cycle) == (first.site_id, first.cycle_id)
    assert value == pytest.approx(float(fit.predict(np.array([[first.shockwave_area]]))[0]))
