import csv
import json

import numpy as np
import pytest

from survbench import cli, runner
from survbench.dataio import data_path
from survbench.runner import ExperimentPlan, boxplot_stats, emit_plot_data, run_scenarios
from survbench.simgen import HazardSpec, ScenarioConfig


def small_plan(out, workers=1, n_sim=3, metrics=("c_index", "ibs"), record_timing=False):
    s = ScenarioConfig("pbc", n_train=80, n_test=80, censoring_target=0.3, n_sim=n_sim)
    return ExperimentPlan((s,), methods=("cox", "rsf:logrank"), metrics=metrics,
                          out_dir=str(out), workers=workers, seed=7, n_trees=10, tune="none",
                          record_timing=record_timing)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    path = run_scenarios(small_plan(out, metrics=("c_index", "ibs", "calibration")))
    return out, path


class TestRunScenarios:
    def test_row_count(self, tmp_path):
        path = run_scenarios(small_plan(tmp_path))
        rows = read_rows(path)
        assert tuple(rows[0]) == runner.RESULT_COLUMNS
        assert len(rows) - 1 == 1 * 2 * 3 * 2
        assert not (tmp_path / "results.partial.csv").exists()

    def test_row_order_and_values(self, finished):
        _, path = finished
        rows = read_rows(path)[1:]
        keys = [(r[5], int(r[6]), r[7]) for r in rows]
        order = {"cox": 0, "rsf:logrank": 1}
        metric = {"c_index": 0, "ibs": 1, "calibration": 2}
        assert keys == sorted(keys, key=lambda k: (order[k[0]], k[1], metric[k[2]]))
        for r in rows:
            v = float(r[8])
            if r[7] == "c_index":
                assert 0.3 < v <= 1
            else:
                assert 0 <= v < 0.5
            assert r[9] == "" and r[10] == ""

    def test_rerun_is_a_no_op(self, finished, monkeypatch):
        out, path = finished
        before = path.read_bytes()
        cal_before = (out / "calibration.csv").read_bytes()

        def boom(*a, **k):
            raise AssertionError("task recomputed")

        monkeypatch.setattr(runner, "_run_task", boom)
        run_scenarios(small_plan(out, metrics=("c_index", "ibs", "calibration")))
        assert path.read_bytes() == before
        assert (out / "calibration.csv").read_bytes() == cal_before

    def test_resume_after_interruption(self, tmp_path, finished):
        _, full = finished
        plan = small_plan(tmp_path, metrics=("c_index", "ibs", "calibration"))
        rows = read_rows(full)
        # keep replicate 0 only, as an interrupted run would leave it
        with open(tmp_path / "results.partial.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerows([rows[0]] + [r for r in rows[1:] if r[6] == "0"])
        seen = []
        real = runner._run_task

        def spy(task):
            seen.append(task[2])
            return real(task)

        import unittest.mock as um
        with um.patch.object(runner, "_run_task", spy):
            path = run_scenarios(plan)
        assert sorted(seen) == [1, 2]
        assert path.read_bytes() == full.read_bytes()

    def test_workers_do_not_change_output(self, tmp_path, finished):
        _, full = finished
        path = run_scenarios(small_plan(tmp_path, workers=2,
                                        metrics=("c_index", "ibs", "calibration")))
        assert path.read_bytes() == full.read_bytes()

    def test_timing_recorded(self, tmp_path):
        path = run_scenarios(small_plan(tmp_path, n_sim=1, record_timing=True))
        for r in read_rows(path)[1:]:
            assert float(r[9]) >= 0 and float(r[10]) >= 0

    def test_plan_json_written(self, finished):
        out, _ = finished
        d = json.loads((out / "plan.json").read_text())
        assert d["seed"] == 7 and d["methods"] == ["cox", "rsf:logrank"]

    def test_calibration_grid(self, finished):
        out, _ = finished
        rows = read_rows(out / "calibration.csv")[1:]
        ps = sorted({float(r[7]) for r in rows})
        assert set(ps) <= set(runner.CALIBRATION_GRID.tolist())


class TestPlanValidation:
    def test_bad_method(self, tmp_path):
        with pytest.raises(ValueError):
            small_plan(tmp_path).__class__((ScenarioConfig(),), methods=("svm",))

    def test_bad_tune(self):
        with pytest.raises(ValueError):
            ExperimentPlan((ScenarioConfig(),), tune="always")

    def test_load_plan_grid(self, tmp_path, monkeypatch):
        p = tmp_path / "plan.json"
        p.write_text(json.dumps({"grid": {"references": ["prostate"], "n_train": [100],
                                          "censoring": [0.6], "gammas": [[2, 5]], "n_sim": 40,
                                          "beta_treatment": [-0.4]},
                                 "methods": ["cox"], "seed": 3}))
        monkeypatch.setenv("SURVBENCH_SEED", "11")
        plan = runner.load_plan(p, smoke=True)
        assert plan.seed == 11 and len(plan.scenarios) == 1
        s = plan.scenarios[0]
        assert s.n_sim == 20 and s.reference == "prostate" and not s.hazard.proportional

    def test_default_plan_size(self):
        plan = runner.default_plan(smoke=True)
        assert len(plan.scenarios) == 144
        assert all(s.n_sim == 20 for s in plan.scenarios)


class TestPlotData:
    def test_five_values(self):
        st = boxplot_stats([5, 1, 4, 2, 3])
        assert (st["q1"], st["median"], st["q3"]) == (2.0, 3.0, 4.0)
        assert st["outliers"] == []

    def test_single_value(self):
        st = boxplot_stats([0.7])
        assert st["q1"] == st["median"] == st["q3"] == 0.7

    def test_outlier(self):
        assert boxplot_stats([1, 2, 3, 4, 100])["outliers"] == [100.0]

    def test_emit(self, finished, tmp_path):
        out, _ = finished
        paths = emit_plot_data(out, tmp_path)
        box = read_rows(paths["boxplot"])
        assert len(box) - 1 == 2 * 3
        for r in read_rows(paths["calibration"])[1:]:
            mean, lo, hi = map(float, r[-3:])
            assert lo - 1e-12 <= mean <= hi + 1e-12

    def test_emit_empty(self, tmp_path):
        (tmp_path / "results.csv").write_text(",".join(runner.RESULT_COLUMNS) + "\n")
        with pytest.raises(ValueError):
            emit_plot_data(tmp_path, tmp_path / "plots")


class TestRealData:
    def test_two_replicates(self):
        from survbench.dataio import load_reference
        ds = runner.prepare_reference(load_reference("pbc"), "pbc")
        rows = runner.run_real_data_bootstrap(ds, B=2, methods=("cox", "rsf:logrank"), seed=1,
                                              n_trees=10, treatment="trt")
        assert len(rows) == 4
        for r in rows:
            assert np.isfinite(r["theta"]) and np.isfinite(r["ci_low"]) and r["B"] == 2


class TestCli:
    def test_simulate_and_plots(self, tmp_path, capsys):
        plan = small_plan(tmp_path / "sim", n_sim=2)
        p = tmp_path / "plan.json"
        d = plan.to_dict()
        d.pop("out_dir")
        p.write_text(json.dumps(d))
        assert cli.main(["simulate", "--plan", str(p), "--out", str(tmp_path / "sim"),
                         "--no-timing"]) == 0
        assert len(read_rows(tmp_path / "sim" / "results.csv")) == 1 + 2 * 2 * 2
        assert cli.main(["plots", "--results", str(tmp_path / "sim"),
                         "--out", str(tmp_path / "plots")]) == 0
        assert (tmp_path / "plots" / "boxplot.csv").exists()

    def test_bootstrap(self, tmp_path, capsys):
        rc = cli.main(["bootstrap", "--data", str(data_path("prostate.csv")),
                       "--schema", str(data_path("prostate.schema.json")), "--B", "2",
                       "--methods", "cox", "--out", str(tmp_path)])
        assert rc == 0
        rows = read_rows(tmp_path / "bootstrap_prostate.csv")
        assert len(rows) == 3

    def test_missing_file(self, tmp_path, capsys):
        rc = cli.main(["plots", "--results", str(tmp_path / "nope"), "--out", str(tmp_path)])
        assert rc == 2
        assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("mode", ["per_replicate", "per_scenario"])
def test_tuning_modes(tmp_path, mode):
    s = ScenarioConfig("pbc", n_train=60, n_test=60, censoring_target=0.3, n_sim=2)
    plan = ExperimentPlan((s,), methods=("rsf:extratrees",), metrics=("c_index",),
                          out_dir=str(tmp_path), seed=3, n_trees=5, tune=mode, record_timing=False)
    rows = read_rows(run_scenarios(plan))[1:]
    assert len(rows) == 2 and all(r[11] == "0" for r in rows)
