"""
Adaptive Metropolis-within-Gibbs sampling of the hierarchical posterior.

Each sweep updates every scalar in turn with a Gaussian random-walk proposal.
During burn-in each proposal scale is tuned on the log scale by Robbins-Monro
steps toward the target acceptance rate; after burn-in the scales are frozen.
Only the site likelihoods a scalar touches are re-evaluated.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from tenacity import RetryCallState, Retrying, retry_if_exception_type, stop_after_attempt

from .config import McmcConfig
from .diagnostics import (
    RHAT_CONVERGED,
    DicResult,
    ModelScore,
    SummaryRow,
    dic,
    gelman_rubin,
    summarize,
)
from .errors import NumericalError
from .hierarchy import SCOPE_ALL_SITES, HierarchicalModel
from .models import ModelFamily

logger = logging.getLogger(__name__)

START_ATTEMPTS = 4
_ADAPTATION_DECAY = 0.6
_ADAPTATION_GAIN = 0.5

# Start settings per attempt: (xi, threshold quantile, jitter factor)
_START_SCHEDULE = (
    (-0.1, 0.85, 1.0),
    (0.0, 0.85, 0.5),
    (0.05, 0.80, 0.25),
    (0.1, 0.75, 0.0),
)


class SiteDecomposedTarget(Protocol):
    """A log posterior that splits into a prior plus independent site terms."""

    n_sites: int

    @property
    def scopes(self) -> np.ndarray: ...

    def log_prior(self, theta: np.ndarray) -> float: ...

    def site_loglik(self, theta: np.ndarray, s: int) -> float: ...


@dataclass
class ChainTrace:
    """Post-burn-in draws of one chain plus sampler instrumentation."""

    chain_index: int
    iterations: np.ndarray  # iteration number of each kept draw
    samples: np.ndarray  # (kept, n_params)
    loglik: np.ndarray  # data-layer log-likelihood of each kept draw
    acceptance: np.ndarray  # post-burn-in acceptance rate per scalar
    scales_at_burn_in: np.ndarray
    final_scales: np.ndarray


def adaptation_gain(t: int, window: int) -> float:
    return _ADAPTATION_GAIN * (1.0 + t / window) ** -_ADAPTATION_DECAY


def sample_chain(
    target: SiteDecomposedTarget,
    theta0: np.ndarray,
    scales: np.ndarray,
    config: McmcConfig,
    chain_index: int,
) -> ChainTrace:
    """
    Run one chain from `theta0`; deterministic given (config.seed, chain_index).

    Raises:
        NumericalError: the starting point has a non-finite log posterior.
    """
    rng = np.random.default_rng([config.seed, chain_index])
    theta = np.array(theta0, dtype=float, copy=True)
    k = theta.size
    scopes = target.scopes
    n_sites = target.n_sites

    site_ll = np.array([target.site_loglik(theta, s) for s in range(n_sites)], dtype=float)
    prior = target.log_prior(theta)
    current = prior + float(site_ll.sum())
    if not math.isfinite(current):
        raise NumericalError(f"Chain {chain_index}: non-finite starting log posterior {current}")

    log_scales = np.log(np.asarray(scales, dtype=float)).copy()
    kept = config.kept_per_chain
    samples = np.empty((kept, k))
    loglik = np.empty(kept)
    iterations = np.empty(kept, dtype=int)
    accepted = np.zeros(k)
    scales_at_burn_in = np.exp(log_scales) if config.burn_in == 0 else None
    report_every = max(config.iterations // 10, 1)
    row = 0

    for t in range(config.iterations):
        if t == config.burn_in:
            scales_at_burn_in = np.exp(log_scales)
        adapting = t < config.burn_in
        gain = adaptation_gain(t, config.adaptation_window)
        steps = rng.standard_normal(k)
        log_u = np.log(rng.random(k))

        for i in range(k):
            old = theta[i]
            theta[i] = old + math.exp(log_scales[i]) * steps[i]
            new_prior = target.log_prior(theta)
            proposed = -math.inf
            new_site = None
            scope = scopes[i]
            if new_prior > -math.inf:
                if scope >= 0:
                    value = target.site_loglik(theta, scope)
                    proposed = new_prior + float(site_ll.sum()) - site_ll[scope] + value
                    new_site = value
                elif scope == SCOPE_ALL_SITES:
                    values = np.array([target.site_loglik(theta, s) for s in range(n_sites)])
                    proposed = new_prior + float(values.sum())
                    new_site = values
                else:
                    proposed = new_prior + float(site_ll.sum())

            accept = log_u[i] < proposed - current
            if accept:
                current = proposed
                if scope >= 0:
                    site_ll[scope] = new_site
                elif scope == SCOPE_ALL_SITES:
                    site_ll = new_site
            else:
                theta[i] = old

            if adapting:
                log_scales[i] += gain * (float(accept) - config.target_acceptance)
            else:
                accepted[i] += accept

        if t >= config.burn_in and (t - config.burn_in) % config.thinning == 0:
            samples[row] = theta
            loglik[row] = site_ll.sum()
            iterations[row] = t
            row += 1

        if (t + 1) % report_every == 0:
            logger.debug(
                f"Chain {chain_index}: iteration {t + 1}/{config.iterations}, "
                f"log posterior {current:.3f}"
            )

    post = config.iterations - config.burn_in
    return ChainTrace(
        chain_index=chain_index,
        iterations=iterations,
        samples=samples,
        loglik=loglik,
        acceptance=accepted / post,
        scales_at_burn_in=scales_at_burn_in,
        final_scales=np.exp(log_scales),
    )


def _chain_jitter(chain_index: int) -> float:
    """0, +0.25, -0.25, +0.5, -0.5, ... for chains 0, 1, 2, ..."""
    if chain_index == 0:
        return 0.0
    return 0.25 * math.ceil(chain_index / 2) * (-1) ** (chain_index + 1)


def initial_state(model: HierarchicalModel, chain_index: int, attempt: int = 1) -> np.ndarray:
    """
    Data-driven starting vector.

    Threshold intercepts at the per-site empirical quantile (85% on the first
    attempt), body parameters moment-matched below it, phi at the log sd of the
    excesses, xi = -0.1. Later attempts move xi toward 0 and lower the
    threshold; chains after the first are over-dispersed by intercept jitter.
    """
    xi0, quantile, jitter_factor = _START_SCHEDULE[min(attempt, len(_START_SCHEDULE)) - 1]
    layout = model.layout
    family = model.family
    theta = np.zeros(len(layout))
    intercepts: dict[str, list[float]] = {name: [] for name in family.linked}

    for data in model.site_data:
        if family.is_hybrid:
            u = float(np.quantile(data.x, quantile))
            below = data.x[data.x < u]
            if below.size < 2:
                below = data.x
            first, second = family.body.moment_link(below)
            body_first, body_second = family.body.LINK_NAMES
            intercepts["mu"].append(u)
            intercepts[body_first].append(first)
            intercepts[body_second].append(second)
            excess = data.x[data.x >= u] - u
        else:
            exceed = data.exceed_mask()
            excess = data.x[exceed] - data.thresholds[data.cycle_of[exceed]]
        spread = float(np.std(excess)) if excess.size > 1 else 0.1
        intercepts["phi"].append(math.log(max(spread, 1e-3)))

    jitter = _chain_jitter(chain_index) * jitter_factor
    for name in family.linked:
        values = np.array(intercepts[name]) + jitter
        theta[layout.intercept_idx[name]] = values
        theta[layout.b_idx[name]] = values.mean()
        theta[layout.beta_idx[name]] = 0.0
        theta[layout.delta_idx[name]] = max(float(values.std()), 0.1)
    theta[layout.xi_idx] = xi0
    return theta


def initial_scales(model: HierarchicalModel) -> np.ndarray:
    """Starting proposal sds; slopes are scaled by their covariate spread."""
    layout = model.layout
    scales = np.full(len(layout), 0.1)
    scales[layout.xi_idx] = 0.05
    covariates = np.vstack([d.covariates for d in model.site_data])
    spread = covariates.std(axis=0)
    columns = {name: model.columns[name] for name in model.family.linked}
    for name in model.family.linked:
        idx = layout.beta_idx[name]
        if idx.size:
            scales[idx] = 0.05 / np.maximum(spread[columns[name]], 0.5)
    return scales


def _describe_failure(model: HierarchicalModel, theta: np.ndarray) -> str:
    if not math.isfinite(model.log_prior(theta)):
        return "log prior"
    for s, site in enumerate(model.sites):
        if not math.isfinite(model.site_loglik(theta, s)):
            return f"data likelihood at site {site}"
    return "log posterior"


def _checked_start(model: HierarchicalModel, chain_index: int, attempt: int) -> np.ndarray:
    theta = initial_state(model, chain_index, attempt)
    if not math.isfinite(model.log_posterior(theta)):
        raise NumericalError(
            f"Chain {chain_index}: non-finite initial posterior on attempt {attempt} "
            f"(offending component: {_describe_failure(model, theta)})"
        )
    return theta


def _log_retry(state: RetryCallState) -> None:
    if state.outcome is not None and state.outcome.failed:
        logger.warning(f"{state.outcome.exception()}; retrying with a more conservative start")


def run_chain(model: HierarchicalModel, config: McmcConfig, chain_index: int) -> ChainTrace:
    """Initialize (with fallback starts) and run one chain."""
    theta0 = None
    for attempt in Retrying(
        stop=stop_after_attempt(START_ATTEMPTS),
        retry=retry_if_exception_type(NumericalError),
        after=_log_retry,
        reraise=True,
    ):
        with attempt:
            theta0 = _checked_start(model, chain_index, attempt.retry_state.attempt_number)

    logger.info(f"Chain {chain_index}: starting {config.iterations} iterations")
    trace = sample_chain(model, theta0, initial_scales(model), config, chain_index)
    logger.info(
        f"Chain {chain_index}: done, post-burn-in acceptance "
        f"{trace.acceptance.min():.2f}-{trace.acceptance.max():.2f}"
    )
    return trace


def run_chains(model: HierarchicalModel, config: McmcConfig, workers: int = 1) -> list[ChainTrace]:
    """Run all chains, in parallel processes when workers > 1; ordered by chain."""
    indices = list(range(config.chains))
    if workers > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.chains)) as pool:
            futures = [pool.submit(run_chain, model, config, i) for i in indices]
            traces = [f.result() for f in futures]
    else:
        traces = [run_chain(model, config, i) for i in indices]
    return sorted(traces, key=lambda c: c.chain_index)


@dataclass
class PosteriorRun:
    """Chains, convergence report, summaries and DIC of one fit."""

    family: ModelFamily
    names: list[str]
    chains: list[ChainTrace]
    config: McmcConfig
    fingerprint: str
    convergence: dict[str, float] = field(default_factory=dict)
    summary: list[SummaryRow] = field(default_factory=list)
    dic: DicResult | None = None

    def pooled_samples(self) -> np.ndarray:
        return np.vstack([c.samples for c in self.chains])

    def pooled_loglik(self) -> np.ndarray:
        return np.concatenate([c.loglik for c in self.chains])

    def unconverged(self, threshold: float = RHAT_CONVERGED) -> list[str]:
        return [name for name, r in self.convergence.items() if not r < threshold]

    def score(self, label: str) -> ModelScore:
        if self.dic is None:
            raise ValueError("Run has no DIC")
        return ModelScore(
            label=label, model=str(self.family), dic=self.dic.dic, fingerprint=self.fingerprint
        )


def convergence_report(chains: list[np.ndarray], names: list[str]) -> dict[str, float]:
    """Split R-hat per scalar from per-chain (draws, params) arrays."""
    if len(chains) < 2:
        logger.warning("Single chain: R-hat is not computed")
        return {}
    if min(c.shape[0] for c in chains) < 10:
        logger.warning("Chains shorter than 10 draws: R-hat is not computed")
        return {}
    return {name: gelman_rubin([c[:, i] for c in chains]) for i, name in enumerate(names)}


def fit_posterior(model: HierarchicalModel, config: McmcConfig, workers: int = 1) -> PosteriorRun:
    """Sample, then attach R-hat, posterior summaries and DIC."""
    chains = run_chains(model, config, workers)
    run = PosteriorRun(
        family=model.family,
        names=list(model.names),
        chains=chains,
        config=config,
        fingerprint=model.fingerprint,
    )
    run.convergence = convergence_report([c.samples for c in chains], run.names)
    for name in run.unconverged():
        logger.warning(f"R-hat {run.convergence[name]:.3f} >= {RHAT_CONVERGED} for {name}")
    if run.convergence:
        logger.info(f"Max R-hat {max(run.convergence.values()):.3f}")
    run.summary = summarize(run.pooled_samples(), run.names)
    run.dic = dic(run.pooled_samples(), model.loglik, run.pooled_loglik())
    logger.info(f"DIC {run.dic.dic:.1f} (Dbar {run.dic.dbar:.1f}, pD {run.dic.pd:.1f})")
    return run
