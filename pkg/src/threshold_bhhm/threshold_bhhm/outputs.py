"""
Run-directory artifacts: CSV tables and JSON documents, plus their readers.

Files are written to a temporary sibling and moved into place, so a crashed
run never leaves a half-written table behind.
"""

import json
import logging
import os
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from .baselines import StabilityWindow, ThresholdScanRow
from .config import RunConfig, build_run_config
from .diagnostics import ComparisonRow, DicResult, ModelScore, SummaryRow
from .errors import InputError
from .goodness import ProbabilityPlotRow, SiteGoodness
from .hierarchy import CycleThreshold
from .models import COVARIATES, Dataset, ModelFamily
from .quantile_regression import QuantileScanRow
from .risk import ObservedCrashes, RiskReport
from .sampler import ChainTrace, PosteriorRun

logger = logging.getLogger(__name__)

TRACES = "traces.csv"
SUMMARY = "summary.csv"
CONVERGENCE = "convergence.csv"
DIC = "dic.json"
RESOLVED_CONFIG = "resolved-config.json"
THRESHOLDS = "thresholds.csv"
GOODNESS_CSV = "goodness.csv"
GOODNESS_JSON = "goodness.json"
RISK = "risk.json"
CYCLE_RISK = "cycle-risk.csv"

_TRACE_META = ("chain", "iteration", "loglik")


def _replace_into(path: Path, write) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + f".tmp.{os.getpid()}")
    try:
        write(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_frame(path: Path, frame: pd.DataFrame) -> Path:
    _replace_into(path, lambda tmp: frame.to_csv(tmp, index=False))
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def write_json(path: Path, data: dict | list) -> Path:
    def write(tmp: Path) -> None:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False, allow_nan=True)
            f.write("\n")

    _replace_into(path, write)
    logger.info(f"Wrote {path}")
    return path


def read_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise InputError(f"Missing file {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"Cannot read {path}: {e}") from e


def read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(
            path,
            dtype={"site_id": str, "cycle_id": str, "name": str},
            float_precision="round_trip",
        )
    except FileNotFoundError as e:
        raise InputError(f"Missing file {path}") from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputError(f"Cannot read {path}: {e}") from e


# ── input tables ──────────────────────────────────────────────────────────────


def write_dataset(dataset: Dataset, directory: Path) -> dict[str, Path]:
    """conflicts.csv, cycles.csv and crashes.csv in the ingestion schemas."""
    conflicts = pd.DataFrame(
        {
            "site_id": [o.site_id for o in dataset.observations],
            "cycle_id": [o.cycle_id for o in dataset.observations],
            "pet_s": [o.pet for o in dataset.observations],
        }
    )
    cycles = pd.DataFrame([asdict(c) for c in dataset.cycles])
    crashes = pd.DataFrame(
        [asdict(r) for r in dataset.crashes], columns=["site_id", "year", "count"]
    )
    return {
        "conflicts": write_frame(directory / "conflicts.csv", conflicts),
        "cycles": write_frame(directory / "cycles.csv", cycles),
        "crashes": write_frame(directory / "crashes.csv", crashes),
    }


# ── posterior run ─────────────────────────────────────────────────────────────


def write_traces(path: Path, run: PosteriorRun) -> Path:
    frames = []
    for chain in run.chains:
        frame = pd.DataFrame(chain.samples, columns=run.names)
        frame.insert(0, "iteration", chain.iterations)
        frame.insert(0, "chain", chain.chain_index)
        frame["loglik"] = chain.loglik  # data-layer log-likelihood of the draw
        frames.append(frame)
    return write_frame(path, pd.concat(frames, ignore_index=True))


def read_traces(path: Path) -> tuple[list[str], list[ChainTrace]]:
    """Parameter names and per-chain draws from traces.csv."""
    frame = read_frame(path)
    missing = [c for c in _TRACE_META if c not in frame.columns]
    if missing:
        raise InputError(f"Trace file {path} is missing columns {missing}")
    names = [c for c in frame.columns if c not in _TRACE_META]
    chains = []
    for index, group in frame.groupby("chain", sort=True):
        k = len(names)
        chains.append(
            ChainTrace(
                chain_index=int(index),
                iterations=group["iteration"].to_numpy(dtype=int),
                samples=group[names].to_numpy(dtype=float),
                loglik=group["loglik"].to_numpy(dtype=float),
                acceptance=np.full(k, np.nan),
                scales_at_burn_in=np.full(k, np.nan),
                final_scales=np.full(k, np.nan),
            )
        )
    if not chains:
        raise InputError(f"Trace file {path} holds no draws")
    return names, chains


def write_summary(path: Path, rows: Sequence[SummaryRow]) -> Path:
    return write_frame(path, pd.DataFrame([asdict(r) for r in rows]))


def write_convergence(path: Path, convergence: dict[str, float], chains: list[ChainTrace]) -> Path:
    names = list(convergence)
    frame = pd.DataFrame({"name": names, "rhat": [convergence[n] for n in names]})
    for chain in chains:
        if names and chain.acceptance.size == len(names):
            frame[f"acceptance_chain{chain.chain_index}"] = chain.acceptance
    return write_frame(path, frame)


def read_acceptance(path: Path, names: Sequence[str], chains: list[ChainTrace]) -> None:
    """Restore the per-chain acceptance rates recorded in convergence.csv, if any."""
    if not path.exists():
        return
    frame = read_frame(path).set_index("name")
    if frame.empty:
        return
    if not set(names) <= set(frame.index):
        logger.warning(f"{path} does not cover every traced parameter; acceptance not restored")
        return
    for chain in chains:
        column = f"acceptance_chain{chain.chain_index}"
        if column in frame.columns:
            chain.acceptance = frame.loc[list(names), column].to_numpy(dtype=float)


def write_dic(path: Path, result: DicResult, model: ModelFamily, fingerprint: str) -> Path:
    return write_json(
        path, {**result.to_dict(), "model": str(model), "dataset_fingerprint": fingerprint}
    )


def read_score(run_dir: Path) -> ModelScore:
    """DIC and dataset fingerprint of a finished run directory."""
    data = read_json(run_dir / DIC)
    try:
        return ModelScore(
            label=run_dir.name or str(run_dir),
            model=str(data["model"]),
            dic=float(data["dic"]),
            fingerprint=str(data["dataset_fingerprint"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{run_dir / DIC} is not a DIC record: {e}") from e


def write_resolved_config(path: Path, config: RunConfig) -> Path:
    def write(tmp: Path) -> None:
        tmp.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")

    _replace_into(path, write)
    logger.info(f"Wrote {path}")
    return path


def write_posterior_run(directory: Path, run: PosteriorRun, config: RunConfig) -> None:
    """traces, summary, convergence, DIC and the resolved config of one fit."""
    write_traces(directory / TRACES, run)
    write_summary(directory / SUMMARY, run.summary)
    write_convergence(directory / CONVERGENCE, run.convergence, run.chains)
    if run.dic is not None:
        write_dic(directory / DIC, run.dic, run.family, run.fingerprint)
    write_resolved_config(directory / RESOLVED_CONFIG, config)


def load_posterior_run(directory: Path) -> tuple[RunConfig, PosteriorRun]:
    """Rebuild a PosteriorRun (draws and settings) from a run directory."""
    config = build_run_config(read_json(directory / RESOLVED_CONFIG))
    names, chains = read_traces(directory / TRACES)
    read_acceptance(directory / CONVERGENCE, names, chains)
    if config.dataset_fingerprint is None:
        raise InputError(f"{directory / RESOLVED_CONFIG} records no dataset fingerprint")
    run = PosteriorRun(
        family=config.model,
        names=names,
        chains=chains,
        config=config.mcmc,
        fingerprint=config.dataset_fingerprint,
    )
    return config, run


def write_comparison(path: Path, rows: Sequence[ComparisonRow]) -> Path:
    return write_frame(path, pd.DataFrame([asdict(r) for r in rows]))


# ── thresholds and baselines ─────────────────────────────────────────────────


def write_threshold_profile(path: Path, rows: Sequence[CycleThreshold]) -> Path:
    return write_frame(path, pd.DataFrame([asdict(r) for r in rows]))


def write_threshold_scan(path: Path, rows: Sequence[ThresholdScanRow]) -> Path:
    return write_frame(path, pd.DataFrame([asdict(r) for r in rows]))


def write_stability_window(path: Path, window: StabilityWindow | None) -> Path:
    data = None if window is None else {**asdict(window), "n_points": window.n_points}
    return write_json(path, {"stability_window": data})


def write_quantile_scan(path: Path, rows: Sequence[QuantileScanRow]) -> Path:
    records = []
    for r in rows:
        record = {"alpha": r.alpha, "coef_intercept": r.fit.coefficient("intercept")}
        record.update({f"coef_{symbol}": r.fit.coefficient(symbol) for symbol in COVARIATES})
        record.update(
            n_exceed=r.n_exceed,
            sigma=r.sigma,
            xi=r.xi,
            se_xi=r.se_xi,
            objective=r.fit.objective,
            flag=r.flag,
        )
        records.append(record)
    return write_frame(path, pd.DataFrame(records))


def write_cycle_thresholds(path: Path, rows: Sequence[tuple[str, str, float]]) -> Path:
    """Per-cycle threshold surface in the `site_id,cycle_id,threshold` schema."""
    return write_frame(path, pd.DataFrame(rows, columns=["site_id", "cycle_id", "threshold"]))


# ── goodness of fit and risk ─────────────────────────────────────────────────


def write_goodness(
    directory: Path, summaries: Sequence[SiteGoodness], rows: Sequence[ProbabilityPlotRow]
) -> None:
    write_frame(directory / GOODNESS_CSV, pd.DataFrame([asdict(r) for r in rows]))
    write_json(directory / GOODNESS_JSON, {"sites": [s.to_dict() for s in summaries]})


def risk_document(
    reports: Sequence[RiskReport], model: ModelFamily, fingerprint: str, draws: int
) -> dict:
    return {
        "model": str(model),
        "dataset_fingerprint": fingerprint,
        "draws": draws,
        "sites": [r.to_dict() for r in reports],
    }


def write_risk(directory: Path, document: dict, reports: Sequence[RiskReport]) -> None:
    write_json(directory / RISK, document)
    records = [
        {"site_id": r.site, "cycle_id": cycle, "risk_mean": float(value)}
        for r in reports
        for cycle, value in zip(r.cycle_ids, r.cycle_risks, strict=True)
    ]
    write_frame(
        directory / CYCLE_RISK, pd.DataFrame(records, columns=["site_id", "cycle_id", "risk_mean"])
    )


def format_observed(result: ObservedCrashes) -> str:
    return (
        f"crashes={result.y0} years={result.years} mean={result.mean:.3f} "
        f"ci=({result.ci_lo:.1f}, {result.ci_hi:.1f})"
    )
