"""Convergence diagnostics, posterior summaries and DIC model comparison."""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError, NumericalError

logger = logging.getLogger(__name__)

RHAT_CONVERGED = 1.2
DIC_COMPETITIVE = 5.0
DIC_DECISIVE = 10.0


def gelman_rubin(chains: Sequence[np.ndarray]) -> float:
    """
    Split-chain potential scale reduction factor for one scalar.

    Each chain is cut to a common even length and halved, so drift within a
    chain shows up as between-chain variance.

    Raises:
        ValueError: fewer than 2 chains or a chain shorter than 10 draws.
    """
    if len(chains) < 2:
        raise ValueError("gelman_rubin needs at least 2 chains")
    arrays = [np.asarray(c, dtype=float).ravel() for c in chains]
    n = min(a.size for a in arrays)
    if n < 10:
        raise ValueError(f"gelman_rubin needs chains of length >= 10, got {n}")
    half = n // 2
    split = np.array([part for a in arrays for part in (a[:half], a[half : 2 * half])])

    between = half * np.var(split.mean(axis=1), ddof=1)
    within = float(np.mean(np.var(split, axis=1, ddof=1)))
    if within == 0.0:
        return 1.0 if between == 0.0 else math.inf
    pooled = (half - 1) / half * within + between / half
    return math.sqrt(pooled / within)


@dataclass(frozen=True, slots=True)
class SummaryRow:
    name: str
    mean: float
    sd: float
    q025: float
    q975: float


def summarize(samples: np.ndarray, names: Sequence[str]) -> list[SummaryRow]:
    """
    Mean, sd and the 2.5% / 97.5% quantiles (linear interpolation) per scalar.

    `samples` holds the post-burn-in draws of all chains stacked as (draws, params).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] == 0:
        raise ValueError("summarize needs at least one draw")
    if samples.shape[1] != len(names):
        raise ValueError(f"{samples.shape[1]} columns but {len(names)} names")
    ddof = 1 if samples.shape[0] > 1 else 0
    means = samples.mean(axis=0)
    sds = samples.std(axis=0, ddof=ddof)
    lo, hi = np.quantile(samples, [0.025, 0.975], axis=0)
    return [
        SummaryRow(name=n, mean=float(m), sd=float(s), q025=float(a), q975=float(b))
        for n, m, s, a, b in zip(names, means, sds, lo, hi, strict=True)
    ]


@dataclass(frozen=True, slots=True)
class DicResult:
    dbar: float
    pd: float
    dic: float
    plug_in: str = "mean"
    likelihood_scope: str = "data-layer"

    def to_dict(self) -> dict:
        return asdict(self)


def dic(
    samples: np.ndarray,
    loglik_fn: Callable[[np.ndarray], float],
    loglik: np.ndarray | None = None,
) -> DicResult:
    """
    Deviance information criterion from posterior draws.

    D = -2 * data-layer log-likelihood. `loglik` may carry the per-draw values
    recorded while sampling; otherwise they are evaluated with `loglik_fn`.
    The plug-in deviance uses the posterior mean, or the posterior median when
    the mean leaves the support.

    Raises:
        ValueError: no draws, or a non-finite draw deviance.
        NumericalError: neither the mean nor the median is a usable plug-in.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ValueError("dic needs at least one draw")
    if loglik is None:
        loglik = np.array([loglik_fn(row) for row in samples])
    deviance = -2.0 * np.asarray(loglik, dtype=float)
    if not np.all(np.isfinite(deviance)):
        raise ValueError("Posterior draws with non-finite deviance")
    dbar = float(deviance.mean())

    plug_in = "mean"
    d_hat = -2.0 * loglik_fn(samples.mean(axis=0))
    if not math.isfinite(d_hat):
        logger.warning("Posterior mean leaves the support; using the posterior median plug-in")
        plug_in = "median"
        d_hat = -2.0 * loglik_fn(np.median(samples, axis=0))
    if not math.isfinite(d_hat):
        raise NumericalError("No finite plug-in deviance at the posterior mean or median")

    pd = dbar - d_hat
    return DicResult(dbar=dbar, pd=pd, dic=dbar + pd, plug_in=plug_in)


@dataclass(frozen=True, slots=True)
class ModelScore:
    label: str
    model: str
    dic: float
    fingerprint: str


@dataclass(frozen=True, slots=True)
class ComparisonRow:
    rank: int
    label: str
    model: str
    dic: float
    delta: float
    verdict: str


def _verdict(delta: float) -> str:
    if delta < DIC_COMPETITIVE:
        return "competitive"
    if delta > DIC_DECISIVE:
        return "decisive"
    return "inconclusive"


def compare_models(scores: Sequence[ModelScore]) -> list[ComparisonRow]:
    """
    Rank runs by DIC against the best one.

    A gap under 5 is "competitive", over 10 "decisive" in favour of the best
    model, anything between "inconclusive".

    Raises:
        InputError: fewer than 2 runs, or runs fitted to different datasets.
    """
    if len(scores) < 2:
        raise InputError("compare_models needs at least 2 runs")
    fingerprints = {s.fingerprint for s in scores}
    if len(fingerprints) > 1:
        detail = ", ".join(f"{s.label}={s.fingerprint[:12]}" for s in scores)
        raise InputError(f"Runs were fitted to different datasets (fingerprints: {detail})")

    ranked = sorted(scores, key=lambda s: s.dic)
    best = ranked[0].dic
    rows = []
    for rank, score in enumerate(ranked, start=1):
        delta = score.dic - best
        rows.append(
            ComparisonRow(
                rank=rank,
                label=score.label,
                model=score.model,
                dic=score.dic,
                delta=delta,
                verdict="best" if rank == 1 else _verdict(delta),
            )
        )
    return rows
