import csv

import numpy as np
import pytest

from survbench.dataio import (
    ColumnSpec,
    Schema,
    SchemaError,
    SurvivalDataset,
    data_path,
    drop_incomplete,
    impute_column_means,
    load_csv,
    load_reference,
    load_schema,
    summarize,
)

from conftest import make_ds

SPECS = [ColumnSpec("bili"), ColumnSpec("sex", "binary", (0, 1))]


def write(tmp_path, rows, header=("time", "status", "bili", "sex")):
    p = tmp_path / "d.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return p


class TestColumnSpec:
    def test_binary_needs_two_levels(self):
        with pytest.raises(SchemaError):
            ColumnSpec("x", "binary", (0, 1, 2))

    def test_ordinal_levels_increasing(self):
        with pytest.raises(SchemaError):
            ColumnSpec("x", "ordinal", (2, 1))

    def test_unique_names(self):
        with pytest.raises(SchemaError):
            Schema((ColumnSpec("a"), ColumnSpec("a")))


class TestLoadCsv:
    def test_blank_cell_flagged(self, tmp_path):
        p = write(tmp_path, [[1, 1, 0.5, 1], [2, 0, "", 0], [3, 1, "NA", 1]])
        ds = load_csv(p, SPECS)
        assert ds.n == 3
        assert ds.missing_mask.sum() == 2
        assert ds.missing_mask[1, 0] and ds.missing_mask[2, 0]

    def test_one_blank(self, tmp_path):
        ds = load_csv(write(tmp_path, [[1, 1, 0.5, 1], [2, 0, "", 0], [3, 1, 1.2, 1]]), SPECS)
        assert ds.missing_mask.sum() == 1

    def test_empty_file(self, tmp_path):
        ds = load_csv(write(tmp_path, []), SPECS)
        assert ds.n == 0 and ds.X.shape == (0, 2)

    def test_missing_column(self, tmp_path):
        with pytest.raises(ValueError, match="missing required"):
            load_csv(write(tmp_path, [[1, 1, 0.5]], header=("time", "status", "bili")), SPECS)

    def test_non_numeric(self, tmp_path):
        with pytest.raises(ValueError):
            load_csv(write(tmp_path, [[1, 1, "high", 1]]), SPECS)

    def test_bad_status(self, tmp_path):
        with pytest.raises(ValueError):
            load_csv(write(tmp_path, [[1, 3, 0.5, 1]]), SPECS)

    def test_stray_level(self, tmp_path):
        with pytest.raises(ValueError):
            load_csv(write(tmp_path, [[1, 1, 0.5, 2]]), SPECS)

    def test_deterministic(self, tmp_path):
        p = write(tmp_path, [[1, 1, 0.5, 1], [2, 0, "", 0]])
        a, b = load_csv(p, SPECS), load_csv(p, SPECS)
        assert np.array_equal(a.X, b.X, equal_nan=True) and np.array_equal(a.time, b.time)

    def test_nonpositive_time(self, tmp_path):
        with pytest.raises(ValueError):
            load_csv(write(tmp_path, [[0, 1, 0.5, 1]]), SPECS)


class TestReferenceData:
    def test_pbc_missing_counts(self):
        ds = load_reference("pbc")
        miss = dict(zip(ds.names, ds.missing_mask.sum(axis=0)))
        assert ds.n == 312
        assert miss["copper"] == 2 and miss["trig"] == 30 and miss["platelet"] == 4

    def test_pbc_time_summary(self):
        s = summarize(load_reference("pbc"))["time"]
        assert s.median == 1839.5 and s.min == 41 and s.max == 4556
        assert s.mean == pytest.approx(2006.4, abs=0.05)
        assert s.sd == pytest.approx(1123.3, abs=0.05)

    def test_pbc_death_rate(self):
        assert load_reference("pbc").status.mean() == pytest.approx(0.401, abs=0.001)

    def test_prostate_time_summary(self):
        s = summarize(load_reference("prostate"))["time"]
        assert s.median == 33.5 and s.min == 0.5 and s.max == 76.5
        assert s.mean == pytest.approx(36.3, abs=0.1)

    def test_prostate_stage_dropped(self):
        assert "stage" not in load_reference("prostate").names

    def test_trig_imputation_matches_hand_mean(self):
        raw = []
        with open(data_path("pbc.csv")) as fh:
            for rec in csv.DictReader(fh):
                if rec["trig"] not in ("", "NA"):
                    raw.append(float(rec["trig"]))
        assert len(raw) == 282
        ds = load_reference("pbc")
        imp = impute_column_means(ds)
        j = ds.names.index("trig")
        filled = imp.X[ds.missing_mask[:, j], j]
        assert np.allclose(filled, sum(raw) / len(raw), rtol=0, atol=1e-12)

    def test_schema_files(self):
        sch = load_schema(data_path("pbc.schema.json"))
        assert sch.event_values == (2.0,)


class TestImputation:
    def test_two_point_mean(self):
        ds = make_ds([1.0, 2.0, np.nan], [1, 2, 3], [1, 1, 1])
        assert np.allclose(impute_column_means(ds).X[:, 0], [1, 2, 1.5])

    def test_identity_without_missing(self):
        ds = make_ds([1.0, 2.0], [1, 2], [1, 1])
        assert impute_column_means(ds) is ds

    def test_all_missing(self):
        with pytest.raises(ValueError):
            impute_column_means(make_ds([np.nan, np.nan], [1, 2], [1, 1]))

    def test_categorical_rejected(self):
        ds = SurvivalDataset([ColumnSpec("s", "binary", (0, 1))], [[np.nan], [1]], [1, 2], [1, 1])
        with pytest.raises(ValueError):
            impute_column_means(ds)

    def test_round_trip_and_mean_preserved(self):
        ds = load_reference("pbc")
        imp = impute_column_means(ds)
        assert all(r.missing == 0 for r in summarize(imp).rows.values())
        for j in range(ds.X.shape[1]):
            obs = ds.X[~ds.missing_mask[:, j], j]
            assert imp.X[:, j].mean() == pytest.approx(obs.mean(), abs=1e-12 * max(1, abs(obs.mean())))

    def test_drop_incomplete(self):
        ds = make_ds([1.0, np.nan, 3.0], [1, 2, 3], [1, 1, 0])
        assert drop_incomplete(ds).n == 2


class TestSummarize:
    def test_singleton(self):
        r = summarize(make_ds([4.2], [1], [1]))["x0"]
        assert r.median == r.mean == r.min == r.max == 4.2

    def test_frequencies_sum_to_one(self):
        s = summarize(load_reference("pbc"))
        for r in s.rows.values():
            if r.frequencies:
                assert sum(r.frequencies.values()) == pytest.approx(1.0, abs=1e-9)
            assert r.min <= r.median <= r.max

    def test_sex_frequency(self):
        assert summarize(load_reference("pbc"))["sex"].frequencies[1.0] == pytest.approx(0.885, abs=0.001)

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize(make_ds(np.zeros((0, 1)), [], []))
