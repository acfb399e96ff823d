"""CSV ingestion and validation of conflicts, cycles, crashes and supplied thresholds."""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InputError
from .models import (
    PET_MAX_SECONDS,
    ConflictObservation,
    CrashRecord,
    CycleRecord,
    Dataset,
)

logger = logging.getLogger(__name__)

CONFLICT_COLUMNS = ("site_id", "cycle_id", "pet_s")
CYCLE_COLUMNS = ("site_id", "cycle_id", "volume", "shockwave_area", "platoon_ratio")
CRASH_COLUMNS = ("site_id", "year", "count")
THRESHOLD_COLUMNS = ("site_id", "cycle_id", "threshold")

_ID_COLUMNS = {"site_id": str, "cycle_id": str}


def _read_table(path: Path, columns: tuple[str, ...], label: str) -> pd.DataFrame:
    """Read a CSV with string ids and check that the schema columns are present."""
    try:
        frame = pd.read_csv(
            path,
            dtype=_ID_COLUMNS,
            keep_default_na=False,
            skipinitialspace=True,
            float_precision="round_trip",
        )
    except FileNotFoundError as e:
        raise InputError(f"{label} file not found: {path}") from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputError(f"Cannot read {label} file {path}: {e}") from e
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(
            f"{label} file {path} is missing columns {missing}; expected {list(columns)}"
        )
    return frame


def _numeric(frame: pd.DataFrame, column: str, path: Path, label: str) -> pd.Series:
    values = pd.to_numeric(frame[column].replace("", np.nan), errors="coerce")
    bad = values.isna()
    if bad.any():
        row = int(bad.idxmax()) + 2  # header is line 1
        raise InputError(
            f"{label} file {path}, line {row}: non-numeric {column} {frame[column].iloc[row - 2]!r}"
        )
    return values.astype(float)


def read_conflicts(path: Path) -> tuple[list[ConflictObservation], int]:
    """
    Parse conflicts.csv (`site_id,cycle_id,pet_s`).

    Rows with a PET outside (0, 4] seconds, or no readable PET, are rejected
    and counted rather than raised. Returns (accepted observations, rejected count).
    """
    frame = _read_table(path, CONFLICT_COLUMNS, "Conflicts")
    pet = pd.to_numeric(frame["pet_s"].replace("", np.nan), errors="coerce")
    valid = pet.notna() & (pet > 0.0) & (pet <= PET_MAX_SECONDS)
    rejected = int((~valid).sum())
    if rejected:
        logger.warning(
            f"Rejected {rejected} of {len(frame)} conflict rows with PET outside "
            f"(0, {PET_MAX_SECONDS}] s"
        )
    observations = [
        ConflictObservation(site_id=site, cycle_id=cycle, pet=float(value))
        for site, cycle, value in zip(
            frame.loc[valid, "site_id"], frame.loc[valid, "cycle_id"], pet[valid], strict=True
        )
    ]
    return observations, rejected


def read_cycles(path: Path) -> list[CycleRecord]:
    """
    Parse cycles.csv (`site_id,cycle_id,volume,shockwave_area,platoon_ratio`).

    Raises:
        InputError: a duplicated (site_id, cycle_id) key or a non-numeric covariate.
    """
    frame = _read_table(path, CYCLE_COLUMNS, "Cycles")
    duplicated = frame.duplicated(subset=["site_id", "cycle_id"], keep="first")
    if duplicated.any():
        first = frame.loc[duplicated].iloc[0]
        raise InputError(
            f"Cycles file {path} has duplicate key (site {first['site_id']}, "
            f"cycle {first['cycle_id']})"
        )
    columns = {c: _numeric(frame, c, path, "Cycles") for c in CYCLE_COLUMNS[2:]}
    return [
        CycleRecord(
            site_id=site,
            cycle_id=cycle,
            volume=float(v),
            shockwave_area=float(a),
            platoon_ratio=float(p),
        )
        for site, cycle, v, a, p in zip(
            frame["site_id"],
            frame["cycle_id"],
            columns["volume"],
            columns["shockwave_area"],
            columns["platoon_ratio"],
            strict=True,
        )
    ]


def read_crashes(path: Path) -> list[CrashRecord]:
    """Parse crashes.csv (`site_id,year,count`)."""
    frame = _read_table(path, CRASH_COLUMNS, "Crashes")
    years = _numeric(frame, "year", path, "Crashes")
    counts = _numeric(frame, "count", path, "Crashes")
    if (counts != counts.round()).any() or (years != years.round()).any():
        raise InputError(f"Crashes file {path}: year and count must be integers")
    records = [
        CrashRecord(site_id=site, year=int(year), count=int(count))
        for site, year, count in zip(frame["site_id"], years, counts, strict=True)
    ]
    keys = [(r.site_id, r.year) for r in records]
    if len(set(keys)) != len(keys):
        raise InputError(f"Crashes file {path} lists a (site, year) pair more than once")
    return records


def read_thresholds(path: Path) -> dict[tuple[str, str], float]:
    """Parse a per-cycle threshold surface (`site_id,cycle_id,threshold`)."""
    frame = _read_table(path, THRESHOLD_COLUMNS, "Thresholds")
    values = _numeric(frame, "threshold", path, "Thresholds")
    thresholds: dict[tuple[str, str], float] = {}
    for site, cycle, value in zip(frame["site_id"], frame["cycle_id"], values, strict=True):
        if (site, cycle) in thresholds:
            raise InputError(f"Thresholds file {path} repeats (site {site}, cycle {cycle})")
        thresholds[(site, cycle)] = float(value)
    return thresholds


def site_thresholds(
    dataset: Dataset, per_site: dict[str, float]
) -> dict[tuple[str, str], float]:
    """Expand constant per-site thresholds to every cycle of the dataset."""
    missing = [s for s in dataset.sites if s not in per_site]
    if missing:
        raise InputError(f"No threshold supplied for sites {missing}")
    return {c.key: float(per_site[c.site_id]) for c in dataset.cycles}


def ingest(
    conflicts_path: Path, cycles_path: Path, crashes_path: Path | None = None
) -> Dataset:
    """
    Read and cross-check the input tables.

    Raises:
        InputError: schema violations, duplicate cycles, or a conflict whose
            (site_id, cycle_id) has no cycle row.
    """
    cycles = read_cycles(cycles_path)
    observations, rejected = read_conflicts(conflicts_path)
    known = {c.key for c in cycles}
    for obs in observations:
        if obs.key not in known:
            raise InputError(
                f"Conflict references missing cycle (site {obs.site_id}, cycle {obs.cycle_id})"
            )
    crashes = read_crashes(crashes_path) if crashes_path is not None else []

    dataset = Dataset(
        observations=tuple(observations),
        cycles=tuple(cycles),
        crashes=tuple(crashes),
        rejected=rejected,
    )
    logger.info(
        f"Ingested {len(observations)} conflicts ({rejected} rejected), "
        f"{len(cycles)} cycles, {len(dataset.sites)} sites"
    )
    for summary in dataset.summarize():
        logger.info(
            f"Site {summary.site_id}: {summary.n_cycles} cycles, {summary.n_conflicts} conflicts, "
            f"PET min {summary.pet_min:.2f} max {summary.pet_max:.2f} "
            f"mean {summary.pet_mean:.2f} s"
        )
    return dataset
