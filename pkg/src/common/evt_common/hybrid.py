"""
Piecewise body + GPD distribution with a CDF that is continuous at the threshold.

    F(x) = F_body(x)                                   x < mu
    F(x) = F_body(mu) + (1 - F_body(mu)) * G(x)        x >= mu

The density below mu is the body density; above mu it is the GPD density
scaled by the body's mass above mu. No smoothness is imposed on the density.
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .distributions import (
    BodyDistribution,
    GpdParams,
    Value,
    _out,
    gpd_cdf,
    gpd_logpdf,
    gpd_quantile,
)

ArrayLike = npt.ArrayLike

_BISECTION_TOL = 1e-12
_BISECTION_MAX_ITER = 200
_U_FLOOR = 1e-300  # u = 0 maps to this quantile level


@dataclass(frozen=True, slots=True)
class HybridParams:
    """Body parameters plus the GPD tail; `tail.mu` is the shared threshold."""

    body: BodyDistribution
    tail: GpdParams

    def __post_init__(self) -> None:
        xi = np.asarray(self.tail.xi)
        if not np.all((xi > -1.0) & (xi < 1.0)):
            raise ValueError("tail shape xi must lie in (-1, 1)")
        if self.body.MIRRORED and not np.all(np.asarray(self.tail.mu) < 0):
            raise ValueError(f"{self.body.KEY} body needs a threshold mu < 0")

    @property
    def mu(self) -> Value:
        return self.tail.mu

    def body_mass(self) -> Value:
        """F_body(mu): probability of falling below the threshold."""
        return self.body.cdf(self.tail.mu)

    def take(self, index: np.ndarray) -> "HybridParams":
        """Restrict array-valued parameters to the entries selected by `index`."""
        return HybridParams(body=self.body.take(index), tail=self.tail.take(index))


def hybrid_cdf(x: ArrayLike, params: HybridParams) -> Value:
    """Hybrid CDF; 1 at or above the xi < 0 tail endpoint."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(params.mu, dtype=float)
    x_b, mu_b = np.broadcast_arrays(x, mu)
    above = x_b >= mu_b
    mass = np.asarray(params.body_mass(), dtype=float)
    tail_x = np.where(above, x_b, mu_b)
    tail = np.asarray(gpd_cdf(tail_x, params.tail))
    below_values = np.asarray(params.body.cdf(np.where(above, mu_b, x_b)))
    return _out(np.where(above, mass + (1.0 - mass) * tail, below_values))


def hybrid_logpdf(x: ArrayLike, params: HybridParams) -> Value:
    """Hybrid log density; -inf outside the support."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(params.mu, dtype=float)
    above = x >= mu
    with np.errstate(divide="ignore"):
        log_tail_mass = np.log1p(-np.asarray(params.body_mass(), dtype=float))
    tail = log_tail_mass + np.asarray(gpd_logpdf(x, params.tail))
    body = np.asarray(params.body.logpdf(x))
    return _out(np.where(above, tail, body))


def hybrid_loglik(data: ArrayLike, params: HybridParams) -> float:
    """
    Sum of hybrid log densities (the product-form likelihood on the log scale).

    Raises:
        ValueError: if `data` is empty.
    """
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("hybrid_loglik requires at least one observation")
    return float(np.sum(hybrid_logpdf(data, params)))


def truncated_body_quantile(u: np.ndarray, params: HybridParams) -> np.ndarray:
    """
    Solve body.cdf(x) = u for x < mu by vectorized bisection.

    `u` must lie below F_body(mu); the result is accurate to 1e-12 relative to
    max(1, |x|). Levels below 1e-300 (including 0) are solved at 1e-300.
    """
    u = np.maximum(np.asarray(u, dtype=float), _U_FLOOR)
    hi = np.broadcast_to(np.asarray(params.mu, dtype=float), u.shape).astype(float)
    lo = np.array(params.body.lower_bracket(u), dtype=float, copy=True)
    lo = np.broadcast_to(lo, u.shape).copy()
    # widen any bracket that is not yet below u
    for _ in range(60):
        bad = np.asarray(params.body.cdf(lo)) > u
        if not bad.any():
            break
        lo = np.where(bad, hi - 2.0 * (hi - lo), lo)
    for _ in range(_BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        below = np.asarray(params.body.cdf(mid)) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < _BISECTION_TOL * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def hybrid_sample(n: int, params: HybridParams, seed: int) -> np.ndarray:
    """
    Draw `n` values by inverse-CDF sampling, deterministic for a given seed.

    Parameters may be arrays of length `n` (one parameter set per draw).

    Raises:
        ValueError: if n < 1.
    """
    if n < 1:
        raise ValueError("hybrid_sample needs n >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    return sample_from_uniforms(u, params)


def sample_from_uniforms(u: np.ndarray, params: HybridParams) -> np.ndarray:
    """Map uniforms through the hybrid inverse CDF."""
    mass = np.broadcast_to(np.asarray(params.body_mass(), dtype=float), u.shape)
    mu = np.broadcast_to(np.asarray(params.mu, dtype=float), u.shape)
    in_body = u < mass
    out = np.empty_like(u)

    if in_body.any():
        body_params = params.take(in_body)
        out[in_body] = truncated_body_quantile(u[in_body], body_params)

    in_tail = ~in_body
    if in_tail.any():
        scaled = (u[in_tail] - mass[in_tail]) / (1.0 - mass[in_tail])
        scaled = np.clip(scaled, 0.0, np.nextafter(1.0, 0.0))
        tail = params.tail.take(in_tail)
        out[in_tail] = np.maximum(gpd_quantile(scaled, tail), mu[in_tail])
    return out
