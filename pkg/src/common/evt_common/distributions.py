"""
Generalized Pareto tail and the five parametric body families.

All functions broadcast over numpy arrays, including array-valued parameters,
so one call can evaluate a whole dataset where every observation carries its
own cycle-level parameters. Scalars in give scalars out.
"""

import logging
import math
from dataclasses import dataclass, fields
from typing import ClassVar

import numpy as np
import numpy.typing as npt
from scipy.optimize import minimize

from .special import _ln_gamma_unchecked, ndtr, regularized_gamma_q

logger = logging.getLogger(__name__)

ArrayLike = npt.ArrayLike
Value = float | np.ndarray

# |xi| below this uses the exponential branch of the GPD.
XI_EPS = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)


def _out(values: np.ndarray) -> Value:
    values = np.asarray(values)
    return float(values) if values.ndim == 0 else values


def _require_positive(name: str, value: ArrayLike) -> None:
    if not np.all(np.asarray(value) > 0):
        raise ValueError(f"{name} must be strictly positive")


def _take(value: Value, index: np.ndarray) -> Value:
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        return float(array)
    return array[index]


def _take_fields(instance, index: np.ndarray):
    """Rebuild a parameter dataclass with every array field indexed by `index`."""
    return type(instance)(*(_take(getattr(instance, f.name), index) for f in fields(instance)))


# ─────────────────────────────────────────────────────────────────────────────
# Generalized Pareto distribution
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class GpdParams:
    """GPD with threshold `mu`, scale `sigma` > 0 and shape `xi`."""

    mu: Value
    sigma: Value
    xi: Value

    def __post_init__(self) -> None:
        _require_positive("sigma", self.sigma)

    @property
    def upper_endpoint(self) -> Value:
        """mu - sigma/xi for xi < 0, +inf otherwise."""
        xi = np.asarray(self.xi, dtype=float)
        bounded = xi < -XI_EPS
        end = np.where(bounded, self.mu - self.sigma / np.where(bounded, xi, -1.0), np.inf)
        return _out(end)

    def take(self, index: np.ndarray) -> "GpdParams":
        """Select entries of array-valued parameters; scalars pass through."""
        return _take_fields(self, index)


def _gpd_reduced(x: ArrayLike, params: GpdParams) -> tuple[np.ndarray, ...]:
    x, mu, sigma, xi = np.broadcast_arrays(
        np.asarray(x, dtype=float),
        np.asarray(params.mu, dtype=float),
        np.asarray(params.sigma, dtype=float),
        np.asarray(params.xi, dtype=float),
    )
    z = (x - mu) / sigma
    exponential = np.abs(xi) < XI_EPS
    safe_xi = np.where(exponential, 1.0, xi)
    return x, mu, sigma, xi, z, exponential, safe_xi


def gpd_cdf(x: ArrayLike, params: GpdParams) -> Value:
    """
    GPD CDF G(x) for x >= mu; exactly 1 at or beyond the xi < 0 endpoint.

    Raises:
        ValueError: if any x lies below the threshold mu.
    """
    x, mu, sigma, xi, z, exponential, safe_xi = _gpd_reduced(x, params)
    if np.any(x < mu):
        raise ValueError("gpd_cdf is defined for x >= mu only")
    base = 1.0 + safe_xi * z
    with np.errstate(divide="ignore", invalid="ignore"):
        power = 1.0 - np.power(np.maximum(base, 0.0), -1.0 / safe_xi)
    cdf = np.where(exponential, -np.expm1(-z), np.where(base <= 0.0, 1.0, power))
    return _out(np.clip(cdf, 0.0, 1.0))


def gpd_sf(x: ArrayLike, params: GpdParams) -> Value:
    """Survival 1 - G(x) for x >= mu, computed without cancellation."""
    x, mu, sigma, xi, z, exponential, safe_xi = _gpd_reduced(x, params)
    if np.any(x < mu):
        raise ValueError("gpd_sf is defined for x >= mu only")
    base = 1.0 + safe_xi * z
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.power(np.maximum(base, 0.0), -1.0 / safe_xi)
    sf = np.where(exponential, np.exp(-z), np.where(base <= 0.0, 0.0, power))
    return _out(np.clip(sf, 0.0, 1.0))


def gpd_logpdf(x: ArrayLike, params: GpdParams) -> Value:
    """GPD log density; -inf below mu and beyond the xi < 0 endpoint."""
    x, mu, sigma, xi, z, exponential, safe_xi = _gpd_reduced(x, params)
    base = 1.0 + safe_xi * z
    with np.errstate(divide="ignore", invalid="ignore"):
        power_branch = -np.log(sigma) - (1.0 / safe_xi + 1.0) * np.log(base)
    logpdf = np.where(exponential, -np.log(sigma) - z, power_branch)
    outside = (z < 0) | (~exponential & (base <= 0.0))
    return _out(np.where(outside, -np.inf, logpdf))


def gpd_quantile(u: ArrayLike, params: GpdParams) -> Value:
    """
    Inverse of gpd_cdf for 0 <= u < 1.

    Raises:
        ValueError: if any u is outside [0, 1).
    """
    u = np.asarray(u, dtype=float)
    if np.any((u < 0.0) | (u >= 1.0)):
        raise ValueError("gpd_quantile requires 0 <= u < 1")
    u, mu, sigma, xi = np.broadcast_arrays(
        u,
        np.asarray(params.mu, dtype=float),
        np.asarray(params.sigma, dtype=float),
        np.asarray(params.xi, dtype=float),
    )
    exponential = np.abs(xi) < XI_EPS
    safe_xi = np.where(exponential, 1.0, xi)
    log_sf = np.log1p(-u)
    power = sigma * np.expm1(-safe_xi * log_sf) / safe_xi
    return _out(mu + np.where(exponential, -sigma * log_sf, power))


@dataclass(frozen=True, slots=True)
class GpdFit:
    """Maximum-likelihood GPD fit to threshold excesses."""

    sigma: float
    xi: float
    covariance: np.ndarray  # order (sigma, xi)
    loglik: float
    n_exceed: int

    @property
    def se_sigma(self) -> float:
        return math.sqrt(max(self.covariance[0, 0], 0.0))

    @property
    def se_xi(self) -> float:
        return math.sqrt(max(self.covariance[1, 1], 0.0))


_MLE_XI_BOUND = 0.999
_MLE_MIN_EXCEED = 10


def _gpd_excess_loglik(sigma: float, xi: float, excess: np.ndarray) -> float:
    params = GpdParams(mu=0.0, sigma=sigma, xi=xi)
    return float(np.sum(gpd_logpdf(excess, params)))


def _numerical_hessian(fn, point: np.ndarray, steps: np.ndarray) -> np.ndarray:
    k = len(point)
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = steps[i]
            ej[j] = steps[j]
            value = (
                fn(point + ei + ej) - fn(point + ei - ej) - fn(point - ei + ej) + fn(point - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
            hess[i, j] = hess[j, i] = value
    return hess


def gpd_mle(exceedances: ArrayLike, threshold: float) -> GpdFit:
    """
    Fit a GPD to the values strictly above `threshold` by maximum likelihood.

    Optimizes (log sigma, xi) with L-BFGS-B, xi bounded to (-0.999, 0.999),
    starting from the method-of-moments estimate plus a small shape grid.
    The covariance of (sigma, xi) is the inverse observed information.

    Raises:
        ValueError: fewer than 10 exceedances, or all exceedances identical.
        RuntimeError: no start converged to a finite optimum.
    """
    values = np.asarray(exceedances, dtype=float)
    excess = values[values > threshold] - threshold
    if excess.size < _MLE_MIN_EXCEED:
        raise ValueError(
            f"gpd_mle needs at least {_MLE_MIN_EXCEED} exceedances above {threshold}, "
            f"got {excess.size}"
        )
    if np.ptp(excess) == 0.0:
        raise ValueError("gpd_mle: all exceedances are identical (degenerate sample)")

    mean = float(excess.mean())
    var = float(excess.var())
    top = float(excess.max())
    ratio = mean * mean / var
    moment_xi = float(np.clip(0.5 * (1.0 - ratio), -0.9, 0.9))

    def neg_loglik(theta: np.ndarray) -> float:
        value = _gpd_excess_loglik(math.exp(theta[0]), theta[1], excess)
        return -value if math.isfinite(value) else 1e10

    starts = []
    for xi0 in (moment_xi, -0.5, -0.2, 0.0, 0.2, 0.5):
        sigma0 = max(mean * (1.0 - xi0), -xi0 * top * 1.05, 1e-8)
        starts.append(np.array([math.log(sigma0), xi0]))

    bounds = [(None, None), (-_MLE_XI_BOUND, _MLE_XI_BOUND)]
    best = None
    messages = []
    for start in starts:
        result = minimize(neg_loglik, start, method="L-BFGS-B", bounds=bounds)
        messages.append(str(result.message))
        if not np.isfinite(result.fun) or result.fun >= 1e10:
            continue
        if best is None or result.fun < best.fun:
            best = result

    if best is None:
        raise RuntimeError(
            f"gpd_mle failed to converge: n={excess.size}, mean={mean:.4g}, "
            f"var={var:.4g}, messages={messages}"
        )

    sigma_hat = math.exp(best.x[0])
    xi_hat = float(best.x[1])

    def nll_natural(point: np.ndarray) -> float:
        if point[0] <= 0:
            return 1e10
        value = _gpd_excess_loglik(point[0], point[1], excess)
        return -value if math.isfinite(value) else 1e10

    estimate = np.array([sigma_hat, xi_hat])
    steps = np.array([1e-4 * sigma_hat, 1e-4])
    info = _numerical_hessian(nll_natural, estimate, steps)
    try:
        covariance = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        logger.warning("Observed information is singular; covariance set to NaN")
        covariance = np.full((2, 2), np.nan)

    return GpdFit(
        sigma=sigma_hat,
        xi=xi_hat,
        covariance=covariance,
        loglik=-float(best.fun),
        n_exceed=int(excess.size),
    )


# ─────────────────────────────────────────────────────────────────────────────
# Body families
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class BodyDistribution:
    """
    Base for the body families.

    Each family has two parameters; `LINK_NAMES` names them as they appear in
    the hierarchy and `LOG_LINKED` marks the ones whose linear predictor is on
    the log scale (positivity constraint).
    """

    KEY: ClassVar[str] = ""
    LINK_NAMES: ClassVar[tuple[str, str]] = ("", "")
    LOG_LINKED: ClassVar[tuple[bool, bool]] = (False, True)
    MIRRORED: ClassVar[bool] = False

    @classmethod
    def from_link(cls, first: ArrayLike, second: ArrayLike) -> "BodyDistribution":
        """Build from link-scale predictors, applying exp where LOG_LINKED."""
        values = [
            np.exp(np.asarray(v, dtype=float)) if log else np.asarray(v, dtype=float)
            for v, log in zip((first, second), cls.LOG_LINKED, strict=True)
        ]
        return cls(*(_out(v) for v in values))

    @classmethod
    def moment_link(cls, sample: np.ndarray) -> tuple[float, float]:
        """Link-scale starting values matched to the moments of `sample`."""
        raise NotImplementedError

    def cdf(self, x: ArrayLike) -> Value:
        raise NotImplementedError

    def logpdf(self, x: ArrayLike) -> Value:
        raise NotImplementedError

    def lower_bracket(self, u: np.ndarray) -> np.ndarray:
        """Points with cdf below `u`, used to start quantile bisection."""
        raise NotImplementedError

    def take(self, index: np.ndarray) -> "BodyDistribution":
        return _take_fields(self, index)


@dataclass(frozen=True, slots=True)
class NormalBody(BodyDistribution):
    """Normal body with mean kappa and standard deviation lam."""

    kappa: Value
    lam: Value

    KEY: ClassVar[str] = "normal"
    LINK_NAMES: ClassVar[tuple[str, str]] = ("kappa", "lambda")

    def __post_init__(self) -> None:
        _require_positive("lambda", self.lam)

    @classmethod
    def moment_link(cls, sample: np.ndarray) -> tuple[float, float]:
        return float(np.mean(sample)), math.log(max(float(np.std(sample)), 1e-3))

    def cdf(self, x: ArrayLike) -> Value:
        return _out(ndtr((np.asarray(x, dtype=float) - self.kappa) / self.lam))

    def logpdf(self, x: ArrayLike) -> Value:
        z = (np.asarray(x, dtype=float) - self.kappa) / self.lam
        return _out(-0.5 * _LOG_2PI - np.log(self.lam) - 0.5 * z * z)

    def lower_bracket(self, u: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.kappa - 40.0 * np.asarray(self.lam), u.shape)


@dataclass(frozen=True, slots=True)
class CauchyBody(BodyDistribution):
    """Cauchy body with location x0 and scale gamma."""

    x0: Value
    gamma: Value

    KEY: ClassVar[str] = "cauchy"
    LINK_NAMES: ClassVar[tuple[str, str]] = ("x0", "gamma")

    def __post_init__(self) -> None:
        _require_positive("gamma", self.gamma)

    @classmethod
    def moment_link(cls, sample: np.ndarray) -> tuple[float, float]:
        q1, median, q3 = np.percentile(sample, [25, 50, 75])
        return float(median), math.log(max(0.5 * float(q3 - q1), 1e-3))

    def cdf(self, x: ArrayLike) -> Value:
        z = (np.asarray(x, dtype=float) - self.x0) / self.gamma
        # arctan2 keeps relative precision far into the left tail
        return _out(np.arctan2(1.0, -z) / math.pi)

    def logpdf(self, x: ArrayLike) -> Value:
        z = (np.asarray(x, dtype=float) - self.x0) / self.gamma
        return _out(-math.log(math.pi) - np.log(self.gamma) - np.log1p(z * z))

    def lower_bracket(self, u: np.ndarray) -> np.ndarray:
        # cdf(x0 - gamma*t) ~ 1/(pi t) for large t
        t = 1.0 / (math.pi * np.maximum(u, 1e-300)) + 1.0
        return self.x0 - np.asarray(self.gamma) * t * 2.0


@dataclass(frozen=True, slots=True)
class LogisticBody(BodyDistribution):
    """Logistic body with location vartheta and scale g."""

    vartheta: Value
    g: Value

    KEY: ClassVar[str] = "logistic"
    LINK_NAMES: ClassVar[tuple[str, str]] = ("vartheta", "g")

    def __post_init__(self) -> None:
        _require_positive("g", self.g)

    @classmethod
    def moment_link(cls, sample: np.ndarray) -> tuple[float, float]:
        scale = float(np.std(sample)) * math.sqrt(3.0) / math.pi
        return float(np.mean(sample)), math.log(max(scale, 1e-3))

    def cdf(self, x: ArrayLike) -> Value:
        z = (np.asarray(x, dtype=float) - self.vartheta) / self.g
        with np.errstate(over="ignore"):
            return _out(1.0 / (1.0 + np.exp(-z)))

    def logpdf(self, x: ArrayLike) -> Value:
        z = (np.asarray(x, dtype=float) - self.vartheta) / self.g
        # -z - 2 log(1 + e^-z), written symmetrically for stability
        return _out(-np.abs(z) - 2.0 * np.log1p(np.exp(-np.abs(z))) - np.log(self.g))

    def lower_bracket(self, u: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.vartheta - 750.0 * np.asarray(self.g), u.shape)


@dataclass(frozen=True, slots=True)
class MirroredGammaBody(BodyDistribution):
    """
    Gamma distribution (shape p, rate q) reflected onto the negative half-line.

    CDF is Q(p, -q x) for x < 0 and exactly 1 for x >= 0.
    """

    p: Value
    q: Value

    KEY: ClassVar[str] = "gamma"
    LINK_NAMES: ClassVar[tuple[str, str]] = ("p", "q")
    LOG_LINKED: ClassVar[tuple[bool, bool]] = (True, True)
    MIRRORED: ClassVar[bool] = True

    def __post_init__(self) -> None:
        _require_positive("p", self.p)
        _require_positive("q", self.q)

    @classmethod
    def moment_link(cls, sample: np.ndarray) -> tuple[float, float]:
        positive = -sample[sample < 0]
        mean = float(positive.mean())
        var = max(float(positive.var()), 1e-6)
        return math.log(mean * mean / var), math.log(mean / var)

    def cdf(self, x: ArrayLike) -> Value:
        x, p, q = np.broadcast_arrays(
            np.asarray(x, dtype=float), np.asarray(self.p, float), np.asarray(self.q, float)
        )
        inside = x < 0
        z = np.where(inside, -q * x, 0.0)
        cdf = np.ones(x.shape)
        if inside.any():
            cdf[inside] = regularized_gamma_q(p[inside], z[inside])
        return _out(cdf)

    def logpdf(self, x: ArrayLike) -> Value:
        x = np.asarray(x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        inside = x < 0
        t = np.where(inside, -x, 1.0)
        log_density = (p - 1.0) * np.log(t) + p * np.log(q) - q * t - _ln_gamma_unchecked(p)
        return _out(np.where(inside, log_density, -np.inf))

    def lower_bracket(self, u: np.ndarray) -> np.ndarray:
        mean = np.asarray(self.p) / np.asarray(self.q)
        sd = np.sqrt(np.asarray(self.p)) / np.asarray(self.q)
        return np.broadcast_to(-(mean + 60.0 * sd), u.shape)


@dataclass(frozen=True, slots=True)
class MirroredLognormalBody(BodyDistribution):
    """
    Lognormal distribution (log-location nu, log-scale w) on the negative half-line.

    CDF is 1 - Phi((ln(-x) - nu) / w) for x < 0 and exactly 1 for x >= 0.
    """

    nu: Value
    w: Value

    KEY: ClassVar[str] = "lognormal"
    LINK_NAMES: ClassVar[tuple[str, str]] = ("nu", "w")
    MIRRORED: ClassVar[bool] = True

    def __post_init__(self) -> None:
        _require_positive("w", self.w)

    @classmethod
    def moment_link(cls, sample: np.ndarray) -> tuple[float, float]:
        logs = np.log(-sample[sample < 0])
        return float(logs.mean()), math.log(max(float(logs.std()), 1e-3))

    def cdf(self, x: ArrayLike) -> Value:
        x = np.asarray(x, dtype=float)
        inside = x < 0
        log_t = np.log(np.where(inside, -x, 1.0))
        cdf = ndtr(-(log_t - self.nu) / self.w)
        return _out(np.where(inside, cdf, 1.0))

    def logpdf(self, x: ArrayLike) -> Value:
        x = np.asarray(x, dtype=float)
        inside = x < 0
        log_t = np.log(np.where(inside, -x, 1.0))
        z = (log_t - self.nu) / self.w
        log_density = -log_t - np.log(self.w) - 0.5 * _LOG_2PI - 0.5 * z * z
        return _out(np.where(inside, log_density, -np.inf))

    def lower_bracket(self, u: np.ndarray) -> np.ndarray:
        return np.broadcast_to(-np.exp(self.nu + 40.0 * np.asarray(self.w)), u.shape)


BODY_FAMILIES: dict[str, type[BodyDistribution]] = {
    cls.KEY: cls
    for cls in (NormalBody, CauchyBody, LogisticBody, MirroredGammaBody, MirroredLognormalBody)
}


def body_cdf(x: ArrayLike, params: BodyDistribution) -> Value:
    """CDF of any body family."""
    return params.cdf(x)


def body_logpdf(x: ArrayLike, params: BodyDistribution) -> Value:
    """Log density of any body family; -inf off-support for mirrored families."""
    return params.logpdf(x)
