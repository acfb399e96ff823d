"""
Process and prior layers of the hierarchical threshold model.

Every linked parameter theta (the threshold mu, phi = log sigma and the two body
parameters) has one linear predictor per signal cycle j at site i:

    eta_j = b_theta + eps_theta,i + beta_theta . X_j,    eps_theta,i ~ N(0, delta_theta^2)

phi and the positive body parameters are exponentiated. The shape xi is a
per-site constant with a Unif(-1, 1) prior and never takes covariates.

The sampler works on a flat vector laid out by `ParameterLayout`. It stores the
site intercepts c_i = b + eps_i directly; eps_i = c_i - b is recovered where the
prior needs it (a unit-Jacobian change of variables).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from evt_common import BodyDistribution, GpdParams, HybridParams, gpd_logpdf

from .errors import InputError
from .models import COVARIATES, CycleRecord, Dataset, ModelFamily

logger = logging.getLogger(__name__)

PRIOR_VARIANCE = 1e6
HALF_NORMAL_SCALE = 2.5
_LOG_2PI = math.log(2.0 * math.pi)
_XI_LOG_DENSITY = math.log(0.5)

# Sampler update scopes: a site index, or one of these markers.
SCOPE_ALL_SITES = -1
SCOPE_PRIOR_ONLY = -2

_COVARIATE_COLUMNS = {symbol: i for i, symbol in enumerate(COVARIATES)}


@dataclass(frozen=True, slots=True)
class LinkSpec:
    """Covariates entering each linked parameter's linear predictor."""

    covariates: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, mapping: dict[str, list[str]], family: ModelFamily) -> "LinkSpec":
        if "xi" in mapping and mapping["xi"]:
            raise InputError("The shape xi takes no covariates")
        unknown = set(mapping) - set(family.linked)
        if unknown:
            raise InputError(f"{family} has no linked parameters {sorted(unknown)}")
        for name, symbols in mapping.items():
            bad = [s for s in symbols if s not in COVARIATES]
            if bad:
                raise InputError(f"Unknown covariates {bad} for {name}")
        return cls({name: tuple(symbols) for name, symbols in mapping.items() if symbols})

    def for_param(self, name: str) -> tuple[str, ...]:
        return self.covariates.get(name, ())

    def to_mapping(self) -> dict[str, list[str]]:
        return {name: list(symbols) for name, symbols in self.covariates.items()}


@dataclass(frozen=True, slots=True)
class LinkedCoefficients:
    """Global intercept, covariate slopes, per-site offsets and hyper-scale."""

    intercept: float
    beta: dict[str, float]
    offsets: dict[str, float]
    delta: float

    def site_intercept(self, site: str) -> float:
        return self.intercept + self.offsets[site]


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of every linked parameter plus the per-site shapes."""

    linked: dict[str, LinkedCoefficients]
    xi: dict[str, float]

    @property
    def sites(self) -> tuple[str, ...]:
        return tuple(self.xi)

    @classmethod
    def zeros(
        cls, family: ModelFamily, spec: LinkSpec, sites: tuple[str, ...], delta: float = 1.0
    ) -> "CoefficientSet":
        linked = {
            name: LinkedCoefficients(
                intercept=0.0,
                beta={s: 0.0 for s in spec.for_param(name)},
                offsets={site: 0.0 for site in sites},
                delta=delta,
            )
            for name in family.linked
        }
        return cls(linked=linked, xi={site: 0.0 for site in sites})


def linear_predictor(coeffs: LinkedCoefficients, cycle: CycleRecord) -> float:
    """b + eps_site + beta . X for one cycle, on the link scale."""
    value = coeffs.site_intercept(cycle.site_id)
    for symbol, slope in coeffs.beta.items():
        value += slope * cycle.covariate(symbol)
    return value


def link_eval(
    coeffs: CoefficientSet, cycle: CycleRecord, spec: LinkSpec, family: ModelFamily
) -> HybridParams:
    """
    Map coefficients to one cycle's hybrid parameters.

    Raises:
        InputError: unknown site, a gpd-only family, or a coefficient set that
            does not cover the link spec.
    """
    if cycle.site_id not in coeffs.xi:
        raise InputError(f"Unknown site {cycle.site_id!r} for this coefficient set")
    if not family.is_hybrid:
        raise InputError("The gpd family has a supplied threshold; use tail_eval")
    values = {}
    for name in family.linked:
        linked = coeffs.linked[name]
        if set(linked.beta) != set(spec.for_param(name)):
            raise InputError(
                f"Coefficients for {name} cover {sorted(linked.beta)}, "
                f"link spec has {sorted(spec.for_param(name))}"
            )
        values[name] = linear_predictor(linked, cycle)
    first, second = family.body.LINK_NAMES
    body = family.body.from_link(values[first], values[second])
    tail = GpdParams(mu=values["mu"], sigma=math.exp(values["phi"]), xi=coeffs.xi[cycle.site_id])
    return HybridParams(body=body, tail=tail)


def tail_eval(coeffs: CoefficientSet, cycle: CycleRecord, threshold: float) -> GpdParams:
    """GPD tail of one cycle above a supplied threshold (gpd family)."""
    if cycle.site_id not in coeffs.xi:
        raise InputError(f"Unknown site {cycle.site_id!r} for this coefficient set")
    phi = linear_predictor(coeffs.linked["phi"], cycle)
    return GpdParams(mu=threshold, sigma=math.exp(phi), xi=coeffs.xi[cycle.site_id])


def _normal_logpdf(x: float | np.ndarray, variance: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * (_LOG_2PI + math.log(variance)) - 0.5 * x * x / variance))


def _half_normal_logpdf(value: float, scale: float) -> float:
    if not value > 0:
        return -math.inf
    return math.log(2.0) + _normal_logpdf(value, scale * scale)


def _prior_terms(intercept: float, beta: np.ndarray, offsets: np.ndarray, delta: float) -> float:
    if not delta > 0:
        return -math.inf
    return (
        _normal_logpdf(intercept, PRIOR_VARIANCE)
        + _normal_logpdf(beta, PRIOR_VARIANCE)
        + _normal_logpdf(offsets, delta * delta)
        + _half_normal_logpdf(delta, HALF_NORMAL_SCALE)
    )


def _xi_prior(xi: np.ndarray) -> float:
    if np.any((xi <= -1.0) | (xi >= 1.0)) or not np.all(np.isfinite(xi)):
        return -math.inf
    return _XI_LOG_DENSITY * xi.size


def log_prior(coeffs: CoefficientSet) -> float:
    """
    Log prior density of a coefficient set.

    N(0, 1e6) on intercepts and slopes, N(0, delta^2) on site offsets,
    half-Normal(0, 2.5) on each delta and Unif(-1, 1) on each site shape.
    """
    total = _xi_prior(np.array(list(coeffs.xi.values()), dtype=float))
    for linked in coeffs.linked.values():
        total += _prior_terms(
            linked.intercept,
            np.array(list(linked.beta.values()), dtype=float),
            np.array(list(linked.offsets.values()), dtype=float),
            linked.delta,
        )
    return total


class ParameterLayout:
    """
    Flat-vector layout of a coefficient set.

    Per linked parameter: site intercepts, global intercept, slopes, delta;
    then one shape per site. Names follow `<param>.<component>[site|covariate]`.
    """

    def __init__(self, family: ModelFamily, spec: LinkSpec, sites: tuple[str, ...]):
        self.family = family
        self.spec = spec
        self.sites = sites
        self.names: list[str] = []
        scopes: list[int] = []
        self.intercept_idx: dict[str, np.ndarray] = {}
        self.b_idx: dict[str, int] = {}
        self.beta_idx: dict[str, np.ndarray] = {}
        self.delta_idx: dict[str, int] = {}

        def add(name: str, scope: int) -> int:
            self.names.append(name)
            scopes.append(scope)
            return len(self.names) - 1

        for param in family.linked:
            self.intercept_idx[param] = np.array(
                [add(f"{param}.intercept[{site}]", i) for i, site in enumerate(sites)]
            )
            self.b_idx[param] = add(f"{param}.b", SCOPE_PRIOR_ONLY)
            self.beta_idx[param] = np.array(
                [add(f"{param}.beta[{s}]", SCOPE_ALL_SITES) for s in spec.for_param(param)],
                dtype=int,
            )
            self.delta_idx[param] = add(f"{param}.delta", SCOPE_PRIOR_ONLY)
        self.xi_idx = np.array([add(f"xi[{site}]", i) for i, site in enumerate(sites)])
        self.scopes = np.array(scopes, dtype=int)

    def __len__(self) -> int:
        return len(self.names)

    def pack(self, coeffs: CoefficientSet) -> np.ndarray:
        theta = np.empty(len(self))
        for param in self.family.linked:
            linked = coeffs.linked[param]
            theta[self.intercept_idx[param]] = [linked.site_intercept(s) for s in self.sites]
            theta[self.b_idx[param]] = linked.intercept
            theta[self.beta_idx[param]] = [linked.beta[s] for s in self.spec.for_param(param)]
            theta[self.delta_idx[param]] = linked.delta
        theta[self.xi_idx] = [coeffs.xi[s] for s in self.sites]
        return theta

    def unpack(self, theta: np.ndarray) -> CoefficientSet:
        linked = {}
        for param in self.family.linked:
            b = float(theta[self.b_idx[param]])
            linked[param] = LinkedCoefficients(
                intercept=b,
                beta={
                    s: float(theta[i])
                    for s, i in zip(self.spec.for_param(param), self.beta_idx[param], strict=True)
                },
                offsets={
                    site: float(theta[i]) - b
                    for site, i in zip(self.sites, self.intercept_idx[param], strict=True)
                },
                delta=float(theta[self.delta_idx[param]]),
            )
        xi = {site: float(theta[i]) for site, i in zip(self.sites, self.xi_idx, strict=True)}
        return CoefficientSet(linked=linked, xi=xi)

    def log_prior(self, theta: np.ndarray) -> float:
        """Vector form of `log_prior`."""
        total = _xi_prior(theta[self.xi_idx])
        if total == -math.inf:
            return total
        for param in self.family.linked:
            b = float(theta[self.b_idx[param]])
            total += _prior_terms(
                b,
                theta[self.beta_idx[param]],
                theta[self.intercept_idx[param]] - b,
                float(theta[self.delta_idx[param]]),
            )
        return total


@dataclass(frozen=True)
class SiteData:
    """Observations of one site, indexed against the site's cycles."""

    site_id: str
    cycle_ids: tuple[str, ...]
    covariates: np.ndarray  # (n_cycles, 3) in COVARIATES order
    x: np.ndarray  # negated PET
    cycle_of: np.ndarray  # local cycle index per observation
    thresholds: np.ndarray | None = None  # supplied per cycle, gpd family only

    @property
    def n_cycles(self) -> int:
        return len(self.cycle_ids)

    def exceed_mask(self) -> np.ndarray:
        if self.thresholds is None:
            raise ValueError("No supplied thresholds")
        return self.x > self.thresholds[self.cycle_of]

    def conflicts_per_cycle(self) -> np.ndarray:
        return np.bincount(self.cycle_of, minlength=self.n_cycles)


def _body_from_eta(
    body_cls: type[BodyDistribution], first: np.ndarray, second: np.ndarray
) -> BodyDistribution | None:
    """Apply the link transforms; None when a value leaves its support."""
    values = []
    with np.errstate(over="ignore"):
        for eta, log_linked in zip((first, second), body_cls.LOG_LINKED, strict=True):
            value = np.exp(eta) if log_linked else eta
            if not np.all(np.isfinite(value)) or (log_linked and not np.all(value > 0)):
                return None
            values.append(value)
    return body_cls(*values)


class HierarchicalModel:
    """
    Data layer plus link structure for one model family.

    Parameters are constant within a signal cycle and shared by all of its
    conflicts.
    """

    def __init__(
        self,
        dataset: Dataset,
        family: ModelFamily,
        spec: LinkSpec,
        thresholds: dict[tuple[str, str], float] | None = None,
    ):
        self.family = family
        self.spec = spec
        self.fingerprint = dataset.fingerprint()
        self.sites = dataset.sites
        self.layout = ParameterLayout(family, spec, self.sites)
        self.columns = {
            name: np.array([_COVARIATE_COLUMNS[s] for s in spec.for_param(name)], dtype=int)
            for name in family.linked
        }

        if not family.is_hybrid and thresholds is None:
            raise InputError("The gpd family needs supplied thresholds per cycle or site")

        by_site_cycles: dict[str, list[CycleRecord]] = {site: [] for site in self.sites}
        for cycle in dataset.cycles:
            by_site_cycles[cycle.site_id].append(cycle)
        cycle_keys = dataset.cycle_index()

        by_site_obs: dict[str, list[tuple[str, float]]] = {site: [] for site in self.sites}
        for obs in dataset.observations:
            if obs.key not in cycle_keys:
                raise InputError(
                    f"Conflict references missing cycle (site {obs.site_id}, cycle {obs.cycle_id})"
                )
            by_site_obs[obs.site_id].append((obs.cycle_id, obs.x))

        self.site_data: list[SiteData] = []
        for site in self.sites:
            cycles = by_site_cycles[site]
            if not by_site_obs[site]:
                raise InputError(f"Site {site} has no conflicts")
            local = {c.cycle_id: i for i, c in enumerate(cycles)}
            site_thresholds = None
            if thresholds is not None and not family.is_hybrid:
                missing = [c.cycle_id for c in cycles if (site, c.cycle_id) not in thresholds]
                if missing:
                    raise InputError(
                        f"No supplied threshold for site {site}, cycles {missing[:5]}"
                    )
                site_thresholds = np.array([thresholds[(site, c.cycle_id)] for c in cycles])
            self.site_data.append(
                SiteData(
                    site_id=site,
                    cycle_ids=tuple(c.cycle_id for c in cycles),
                    covariates=np.array([c.covariate_vector() for c in cycles]),
                    x=np.array([x for _, x in by_site_obs[site]]),
                    cycle_of=np.array([local[cid] for cid, _ in by_site_obs[site]], dtype=int),
                    thresholds=site_thresholds,
                )
            )
        if not family.is_hybrid:
            for data in self.site_data:
                n = int(data.exceed_mask().sum())
                if n == 0:
                    raise InputError(f"Site {data.site_id} has no conflicts above its threshold")
                logger.info(f"Site {data.site_id}: {n} exceedances above supplied thresholds")

    @property
    def n_params(self) -> int:
        return len(self.layout)

    @property
    def names(self) -> list[str]:
        return self.layout.names

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def scopes(self) -> np.ndarray:
        return self.layout.scopes

    def predictors(self, theta: np.ndarray, s: int) -> dict[str, np.ndarray]:
        """Link-scale linear predictors of every cycle at site index `s`."""
        data = self.site_data[s]
        out = {}
        for name in self.family.linked:
            cols = self.columns[name]
            out[name] = (
                theta[self.layout.intercept_idx[name][s]]
                + data.covariates[:, cols] @ theta[self.layout.beta_idx[name]]
            )
        return out

    def site_params(self, theta: np.ndarray, s: int) -> HybridParams | GpdParams | None:
        """
        Per-cycle parameters at site `s` (arrays over the site's cycles).

        Hybrid families give HybridParams, the gpd family the GPD tails above
        the supplied thresholds. None when the parameters leave their support.
        """
        xi = float(theta[self.layout.xi_idx[s]])
        if not -1.0 < xi < 1.0:
            return None
        eta = self.predictors(theta, s)
        with np.errstate(over="ignore"):
            sigma = np.exp(eta["phi"])
        if not np.all(np.isfinite(sigma)) or not np.all(sigma > 0):
            return None
        if not self.family.is_hybrid:
            return GpdParams(mu=self.site_data[s].thresholds, sigma=sigma, xi=xi)

        mu = eta["mu"]
        if not np.all(np.isfinite(mu)):
            return None
        body_cls = self.family.body
        if body_cls.MIRRORED and np.any(mu >= 0):
            return None
        first, second = body_cls.LINK_NAMES
        body = _body_from_eta(body_cls, eta[first], eta[second])
        if body is None:
            return None
        return HybridParams(body=body, tail=GpdParams(mu=mu, sigma=sigma, xi=xi))

    def site_loglik(self, theta: np.ndarray, s: int) -> float:
        """Data-layer log-likelihood of site `s`; -inf off-support."""
        params = self.site_params(theta, s)
        if params is None:
            return -math.inf
        data = self.site_data[s]

        if isinstance(params, GpdParams):
            exceed = data.exceed_mask()
            cyc = data.cycle_of[exceed]
            total = float(np.sum(_gpd_logpdf_indexed(data.x[exceed], params, cyc)))
            return total if not math.isnan(total) else -math.inf

        mu = np.asarray(params.mu)
        mass = np.asarray(params.body_mass(), dtype=float)
        above = data.x >= mu[data.cycle_of]
        below_cyc = data.cycle_of[~above]
        above_cyc = data.cycle_of[above]

        body_part = np.asarray(params.body.take(below_cyc).logpdf(data.x[~above]), dtype=float)
        with np.errstate(divide="ignore"):
            tail_mass = np.log1p(-mass[above_cyc])
        tail_part = _gpd_logpdf_indexed(data.x[above], params.tail, above_cyc)
        total = float(body_part.sum() + tail_mass.sum() + tail_part.sum())
        return total if not math.isnan(total) else -math.inf

    def site_logliks(self, theta: np.ndarray) -> np.ndarray:
        return np.array([self.site_loglik(theta, s) for s in range(len(self.sites))])

    def loglik(self, theta: np.ndarray) -> float:
        """Total data-layer log-likelihood."""
        total = 0.0
        for s in range(len(self.sites)):
            value = self.site_loglik(theta, s)
            if value == -math.inf:
                return value
            total += value
        return total

    def log_prior(self, theta: np.ndarray) -> float:
        return self.layout.log_prior(theta)

    def log_posterior(self, theta: np.ndarray) -> float:
        prior = self.log_prior(theta)
        if prior == -math.inf:
            return prior
        return prior + self.loglik(theta)

    def coefficients(self, theta: np.ndarray) -> CoefficientSet:
        return self.layout.unpack(theta)

    def cycle_tails(self, theta: np.ndarray) -> list[GpdParams]:
        """Per-site GPD tails over each site's cycles, for crash risk."""
        tails = []
        for s, site in enumerate(self.sites):
            params = self.site_params(theta, s)
            if params is None:
                raise InputError(f"Coefficient vector leaves the support at site {site}")
            tails.append(params if isinstance(params, GpdParams) else params.tail)
        return tails

    def cycle_thresholds(self, theta: np.ndarray, s: int) -> np.ndarray:
        data = self.site_data[s]
        if not self.family.is_hybrid:
            return data.thresholds
        return self.predictors(theta, s)["mu"]


def _gpd_logpdf_indexed(x: np.ndarray, tail: GpdParams, cycle_of: np.ndarray) -> np.ndarray:
    """GPD log density of observations whose tail parameters are per cycle."""
    return np.asarray(gpd_logpdf(x, tail.take(cycle_of)), dtype=float)


def log_posterior(coeffs: CoefficientSet, model: HierarchicalModel) -> float:
    """log_prior plus the summed per-cycle data log-likelihood; -inf propagates."""
    prior = log_prior(coeffs)
    if prior == -math.inf:
        return prior
    return prior + model.loglik(model.layout.pack(coeffs))


@dataclass(frozen=True, slots=True)
class CycleThreshold:
    site_id: str
    cycle_id: str
    mu_mean: float
    n_conflicts: int
    n_exceed: int


def threshold_profile(model: HierarchicalModel, samples: np.ndarray) -> list[CycleThreshold]:
    """
    Posterior-mean threshold of every cycle with its conflict and exceedance counts.

    The threshold predictor is linear in the coefficients, so its posterior mean
    is the predictor at the posterior-mean coefficient vector.
    """
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("threshold_profile needs a non-empty (draws, params) sample array")
    theta_bar = samples.mean(axis=0)
    rows = []
    for s, data in enumerate(model.site_data):
        mu = np.asarray(model.cycle_thresholds(theta_bar, s), dtype=float)
        if model.family.is_hybrid:
            exceed = data.x >= mu[data.cycle_of]
        else:
            exceed = data.x > mu[data.cycle_of]
        n_conflicts = data.conflicts_per_cycle()
        n_exceed = np.bincount(data.cycle_of[exceed], minlength=data.n_cycles)
        for j, cycle_id in enumerate(data.cycle_ids):
            rows.append(
                CycleThreshold(
                    site_id=data.site_id,
                    cycle_id=cycle_id,
                    mu_mean=float(mu[j]),
                    n_conflicts=int(n_conflicts[j]),
                    n_exceed=int(n_exceed[j]),
                )
            )
    return rows
