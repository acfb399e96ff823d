"""Unit tests for CSV ingestion and the dataset writer."""

import pytest
from threshold_bhhm.errors import InputError
from threshold_bhhm.ingest import (
    ingest,
    read_conflicts,
    read_crashes,
    read_cycles,
    read_thresholds,
    site_thresholds,
)
from threshold_bhhm.outputs import write_dataset

CYCLES = (
    "site_id,cycle_id,volume,shockwave_area,platoon_ratio\n"
    "1,1,12,1.5,0.8\n"
    "1,2,15,2.0,1.1\n"
    "2,1,9,0.7,0.6\n"
)

# ---- Fixtures ----


def _write(tmp_path, name: str, text: str):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def cycles_csv(tmp_path):
    return _write(tmp_path, "cycles.csv", CYCLES)


# ---- Conflicts ----


class TestReadConflicts:
    def test_negates_pet(self, tmp_path):
        path = _write(tmp_path, "conflicts.csv", "site_id,cycle_id,pet_s\n1,1,0.12\n")
        observations, rejected = read_conflicts(path)
        assert rejected == 0
        assert observations[0].x == pytest.approx(-0.12)
        assert observations[0].key == ("1", "1")

    def test_out_of_range_rows_are_counted(self, tmp_path):
        path = _write(
            tmp_path,
            "conflicts.csv",
            "site_id,cycle_id,pet_s\n1,1,0.5\n1,1,4.5\n1,2,4.0\n1,2,\n2,1,0\n",
        )
        observations, rejected = read_conflicts(path)
        assert [o.pet for o in observations] == [0.5, 4.0]
        assert rejected == 3

    def test_ids_stay_strings(self, tmp_path):
        path = _write(tmp_path, "conflicts.csv", "site_id,cycle_id,pet_s\n007,01,1.0\n")
        (obs,), _ = read_conflicts(path)
        assert obs.key == ("007", "01")

    def test_missing_column(self, tmp_path):
        path = _write(tmp_path, "conflicts.csv", "site_id,pet_s\n1,1.0\n")
        with pytest.raises(InputError, match="missing columns"):
            read_conflicts(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            read_conflicts(tmp_path / "absent.csv")


# ---- Cycles, crashes, thresholds ----


class TestReadCycles:
    def test_parses_covariates(self, cycles_csv):
        cycles = read_cycles(cycles_csv)
        assert [c.key for c in cycles] == [("1", "1"), ("1", "2"), ("2", "1")]
        assert cycles[1].covariate("A") == 2.0

    def test_duplicate_key(self, tmp_path):
        path = _write(tmp_path, "cycles.csv", CYCLES + "1,2,10,1.0,1.0\n")
        with pytest.raises(InputError, match=r"duplicate key \(site 1, cycle 2\)"):
            read_cycles(path)

    def test_non_numeric_covariate(self, tmp_path):
        path = _write(tmp_path, "cycles.csv", CYCLES + "2,2,abc,1.0,1.0\n")
        with pytest.raises(InputError, match="line 5: non-numeric volume"):
            read_cycles(path)

    def test_negative_covariate(self, tmp_path):
        path = _write(tmp_path, "cycles.csv", CYCLES + "2,2,5,-1.0,1.0\n")
        with pytest.raises(InputError, match="Covariate A"):
            read_cycles(path)


def test_read_crashes(tmp_path):
    path = _write(tmp_path, "crashes.csv", "site_id,year,count\n1,2019,5\n1,2020,4\n")
    records = read_crashes(path)
    assert [(r.year, r.count) for r in records] == [(2019, 5), (2020, 4)]

    repeated = _write(tmp_path, "repeated.csv", "site_id,year,count\n1,2019,5\n1,2019,4\n")
    with pytest.raises(InputError, match="more than once"):
        read_crashes(repeated)

    fractional = _write(tmp_path, "fractional.csv", "site_id,year,count\n1,2019,1.5\n")
    with pytest.raises(InputError, match="integers"):
        read_crashes(fractional)


def test_read_thresholds(tmp_path):
    path = _write(tmp_path, "thresholds.csv", "site_id,cycle_id,threshold\n1,1,-1.2\n1,2,-1.1\n")
    assert read_thresholds(path) == {("1", "1"): -1.2, ("1", "2"): -1.1}


# ---- Cross-checks ----


class TestIngest:
    def test_dataset(self, tmp_path, cycles_csv):
        conflicts = _write(tmp_path, "conflicts.csv", "site_id,cycle_id,pet_s\n1,1,0.5\n2,1,4.5\n")
        crashes = _write(tmp_path, "crashes.csv", "site_id,year,count\n2,1,3\n")
        dataset = ingest(conflicts, cycles_csv, crashes)
        assert len(dataset.observations) == 1
        assert dataset.rejected == 1
        assert len(dataset.cycles) == 3
        assert dataset.crashes_by_site()["2"][0].count == 3

    def test_dangling_cycle(self, tmp_path, cycles_csv):
        conflicts = _write(tmp_path, "conflicts.csv", "site_id,cycle_id,pet_s\n3,1,0.5\n")
        with pytest.raises(InputError, match=r"missing cycle \(site 3, cycle 1\)"):
            ingest(conflicts, cycles_csv)

    def test_site_thresholds_expand_to_cycles(self, tmp_path, cycles_csv):
        conflicts = _write(tmp_path, "conflicts.csv", "site_id,cycle_id,pet_s\n1,1,0.5\n2,1,1.0\n")
        dataset = ingest(conflicts, cycles_csv)
        thresholds = site_thresholds(dataset, {"1": -1.0, "2": -1.5})
        assert thresholds == {("1", "1"): -1.0, ("1", "2"): -1.0, ("2", "1"): -1.5}
        with pytest.raises(InputError, match="No threshold"):
            site_thresholds(dataset, {"1": -1.0})


def test_written_dataset_reads_back(tmp_path, small_dataset):
    paths = write_dataset(small_dataset, tmp_path / "data")
    again = ingest(paths["conflicts"], paths["cycles"], paths["crashes"])
    assert again.fingerprint() == small_dataset.fingerprint()
    assert again.crashes == small_dataset.crashes
    assert again.rejected == 0
