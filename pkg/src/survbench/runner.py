"""Simulation grid, real-data bootstrap study and plot-ready summaries.

Results are long-format CSV rows, one per (scenario, method, replicate,
metric). Each (scenario, replicate) task is self-contained: its data and
model seeds derive from the plan seed and the replicate index only, so
the output does not depend on the number of workers or on scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bootstrap import run_bootstrap_metrics
from .coxph import ConvergenceError
from .dataio import SurvivalDataset, drop_incomplete, impute_column_means, load_reference
from .metrics import NoComparablePairs, calibration_curve, harrell_c, integrated_brier
from .models import CoxSpec, RsfSpec, fit_model, parse_method
from .rsf import default_grid, tune_grid
from .simgen import (
    REFERENCES,
    BoundCache,
    ScenarioConfig,
    derive_rng,
    generate_dataset,
    interaction_pairs,
    scenario_grid,
)

log = logging.getLogger(__name__)

__all__ = [
    "RESULT_COLUMNS",
    "ExperimentPlan",
    "ResultRow",
    "run_scenarios",
    "run_real_data_bootstrap",
    "emit_plot_data",
    "load_plan",
    "default_plan",
]

RESULT_COLUMNS = ("reference", "n_train", "censoring", "beta_treatment", "gamma_spec", "method",
                  "replicate", "metric", "value", "fit_ms", "predict_ms", "dropped", "drop_reason")
CALIBRATION_COLUMNS = ("reference", "n_train", "censoring", "beta_treatment", "gamma_spec",
                       "method", "replicate", "p", "observed")
METHODS = ("cox", "rsf:logrank", "rsf:logrankscore", "rsf:bs.gradient", "rsf:C",
           "rsf:extratrees", "rsf:maxstat")
METRICS = ("c_index", "ibs", "calibration")
TUNE_MODES = ("per_replicate", "per_scenario", "none")
# common abscissa for averaging calibration curves across replicates
CALIBRATION_GRID = np.round(np.linspace(0.02, 0.98, 49), 2)


@dataclass(frozen=True)
class ExperimentPlan:
    scenarios: tuple[ScenarioConfig, ...]
    methods: tuple[str, ...] = METHODS
    metrics: tuple[str, ...] = ("c_index", "ibs")
    out_dir: str = "results"
    workers: int = 1
    seed: int = 20240101
    n_trees: int = 500
    tune: str = "per_replicate"
    record_timing: bool = True

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("plan has no scenarios")
        if not self.methods:
            raise ValueError("plan has no methods")
        for m in self.methods:
            parse_method(m)
        for m in self.metrics:
            if m not in METRICS:
                raise ValueError(f"unknown metric {m!r}")
        if self.tune not in TUNE_MODES:
            raise ValueError(f"tune must be one of {TUNE_MODES}")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        # every scenario runs under the plan seed
        object.__setattr__(self, "scenarios",
                           tuple(replace(s, seed=self.seed) for s in self.scenarios))

    def to_dict(self) -> dict:
        return {
            "scenarios": [s.to_dict() for s in self.scenarios],
            "methods": list(self.methods), "metrics": list(self.metrics),
            "out_dir": self.out_dir, "workers": self.workers, "seed": self.seed,
            "n_trees": self.n_trees, "tune": self.tune, "record_timing": self.record_timing,
        }


@dataclass
class ResultRow:
    reference: str
    n_train: int
    censoring: float
    beta_treatment: float
    gamma_spec: str
    method: str
    replicate: int
    metric: str
    value: float = math.nan
    fit_ms: float | None = None
    predict_ms: float | None = None
    dropped: bool = False
    drop_reason: str = ""

    def cells(self) -> list[str]:
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        return [self.reference, str(self.n_train), repr(float(self.censoring)),
                repr(float(self.beta_treatment)), self.gamma_spec, self.method,
                str(self.replicate), self.metric, "" if self.dropped else fmt(self.value),
                fmt(self.fit_ms), fmt(self.predict_ms), "1" if self.dropped else "0",
                self.drop_reason]


def _scenario_cells(s: ScenarioConfig) -> list[str]:
    return [s.reference, str(s.n_train), repr(float(s.censoring_target)),
            repr(float(s.beta_treatment)), s.hazard.label]


def default_plan(smoke: bool = False, **overrides) -> ExperimentPlan:
    n_sim = 20 if smoke else 500
    return ExperimentPlan(tuple(scenario_grid(n_sim=n_sim)), **overrides)


def load_plan(path, smoke: bool = False, out_dir: str | None = None,
              workers: int | None = None) -> ExperimentPlan:
    """Read a JSON plan.

    Scenarios are either listed explicitly (``"scenarios"``: list of
    scenario dicts) or expanded from ``"grid"`` (keyword arguments of
    :func:`survbench.simgen.scenario_grid`). ``smoke`` caps ``n_sim`` at 20.
    ``SURVBENCH_SEED`` overrides the plan seed.
    """
    d = json.loads(Path(path).read_text())
    if "scenarios" in d:
        scenarios = [ScenarioConfig.from_dict(s) for s in d["scenarios"]]
    else:
        grid = dict(d.get("grid", {}))
        for k in ("gammas", "references", "n_train", "censoring", "beta_treatment"):
            if k in grid:
                grid[k] = tuple(tuple(g) if isinstance(g, list) else g for g in grid[k])
        scenarios = scenario_grid(**grid)
    if smoke:
        scenarios = [replace(s, n_sim=min(s.n_sim, 20)) for s in scenarios]
    seed = int(os.environ.get("SURVBENCH_SEED", d.get("seed", 20240101)))
    return ExperimentPlan(
        tuple(scenarios),
        methods=tuple(d.get("methods", METHODS)),
        metrics=tuple(d.get("metrics", ("c_index", "ibs"))),
        out_dir=out_dir or d.get("out_dir", "results"),
        workers=workers or int(d.get("workers", 1)),
        seed=seed,
        n_trees=int(d.get("n_trees", 500)),
        tune=d.get("tune", "per_replicate"),
        record_timing=bool(d.get("record_timing", True)),
    )


# -- one (scenario, replicate) task ------------------------------------------

def _spec_for(method: str, scenario: ScenarioConfig, plan: ExperimentPlan, tuned: dict):
    if method == "cox":
        ref = REFERENCES[scenario.reference]
        return CoxSpec(interactions=tuple(interaction_pairs(scenario.reference)), stepwise=True,
                       forced=(ref["treatment"],))
    spec = parse_method(method, n_trees=plan.n_trees, tune=plan.tune == "per_replicate")
    if plan.tune == "per_scenario" and method in tuned:
        spec = RsfSpec(tuned[method], tune=False)
    return spec


def _evaluate(model, test: SurvivalDataset, metric: str) -> tuple[float, np.ndarray | None]:
    if metric == "c_index":
        return harrell_c(model.risk(test), test.time, test.status), None
    if metric == "ibs":
        return integrated_brier(lambda t: model.survival(test, t), test), None
    t_star = float(np.median(test.time))
    p = np.clip(1.0 - model.survival(test, [t_star])[:, 0], 1e-10, 1 - 1e-10)
    curve = calibration_curve(p, test, t_star)
    # mean absolute gap between observed and predicted over the curve's grid
    value = float(np.mean(np.abs(curve.observed - curve.predicted)))
    inside = (CALIBRATION_GRID >= curve.predicted[0]) & (CALIBRATION_GRID <= curve.predicted[-1])
    obs = np.full(len(CALIBRATION_GRID), np.nan)
    if len(curve.predicted) > 1:
        obs[inside] = np.interp(CALIBRATION_GRID[inside], curve.predicted, curve.observed)
    return value, obs


def _run_task(args):
    plan, s_idx, replicate, bound, tuned = args
    scenario = plan.scenarios[s_idx]
    train, test = generate_dataset(scenario, replicate, bound=bound)
    rows, curves = [], []
    base = dict(reference=scenario.reference, n_train=scenario.n_train,
                censoring=scenario.censoring_target, beta_treatment=scenario.beta_treatment,
                gamma_spec=scenario.hazard.label, replicate=replicate)
    for method in plan.methods:
        spec = _spec_for(method, scenario, plan, tuned.get(s_idx, {}))
        rng = derive_rng(plan.seed, replicate, f"model:{s_idx}:{method}")
        t0 = time.perf_counter()
        try:
            model = fit_model(spec, train, rng)
            fit_err = ""
        except (ConvergenceError, ValueError, np.linalg.LinAlgError) as exc:
            model, fit_err = None, f"fit failed: {type(exc).__name__}: {exc}"
        fit_ms = (time.perf_counter() - t0) * 1e3
        for metric in plan.metrics:
            row = ResultRow(method=method, metric=metric, **base)
            if plan.record_timing:
                row.fit_ms = fit_ms
            if model is None:
                row.dropped, row.drop_reason = True, fit_err
                rows.append(row)
                continue
            t0 = time.perf_counter()
            try:
                value, curve = _evaluate(model, test, metric)
                if not math.isfinite(value):
                    raise ValueError("non-finite metric value")
                row.value = value
                if curve is not None:
                    curves.append((method, curve))
            except (NoComparablePairs, ZeroDivisionError, ConvergenceError, ValueError) as exc:
                row.dropped, row.drop_reason = True, f"{type(exc).__name__}: {exc}"
            if plan.record_timing:
                row.predict_ms = (time.perf_counter() - t0) * 1e3
            rows.append(row)
    cal_rows = []
    for method, curve in curves:
        for p, o in zip(CALIBRATION_GRID, curve):
            if np.isfinite(o):
                cal_rows.append(_scenario_cells(scenario) + [method, str(replicate), repr(float(p)),
                                                             repr(float(o))])
    return s_idx, replicate, [r.cells() for r in rows], cal_rows


# -- orchestration -------------------------------------------------------------

def _read_csv(path: Path, header: Sequence[str]) -> list[list[str]]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None:
            return []
        if tuple(head) != tuple(header):
            raise ValueError(f"{path}: unexpected header {head}")
        return [r for r in reader if r]


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def _append_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]):
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(header)
        w.writerows(rows)


def _tune_per_scenario(plan: ExperimentPlan, s_idx: int, bound: float) -> dict:
    """Grid search once per scenario on the replicate-0 training data."""
    scenario = plan.scenarios[s_idx]
    train, _ = generate_dataset(scenario, 0, bound=bound)
    out = {}
    for method in plan.methods:
        if method == "cox":
            continue
        spec = parse_method(method, n_trees=plan.n_trees)
        seed = int(derive_rng(plan.seed, 0, f"tune:{s_idx}:{method}").integers(0, 2**63 - 1))
        grid = default_grid(train.X.shape[1], plan.n_trees, spec.params.rule, seed=seed)
        out[method], _ = tune_grid(train, grid)
    return out


def run_scenarios(plan: ExperimentPlan, progress: bool = False) -> Path:
    """Run every (scenario, replicate) task of ``plan``; returns the results CSV path.

    Completed tasks already present in ``results.csv`` (or in the partial
    file of an interrupted run) are not recomputed. Rows are written in
    plan order: scenario, method, replicate, metric.
    """
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    results_path = out / "results.csv"
    partial_path = out / "results.partial.csv"
    cal_path = out / "calibration.csv"
    cal_partial = out / "calibration.partial.csv"
    (out / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n")

    scen_index = {tuple(_scenario_cells(s)): i for i, s in enumerate(plan.scenarios)}
    per_task = len(plan.methods) * len(plan.metrics)
    existing: dict[tuple, list[list[str]]] = {}
    for row in _read_csv(results_path, RESULT_COLUMNS) + _read_csv(partial_path, RESULT_COLUMNS):
        key = scen_index.get(tuple(row[:5]))
        if key is None:
            continue
        existing.setdefault((key, int(row[6])), {})[(row[5], row[7])] = row
    cal_existing: dict[tuple, list[list[str]]] = {}
    for row in _read_csv(cal_path, CALIBRATION_COLUMNS) + _read_csv(cal_partial, CALIBRATION_COLUMNS):
        key = scen_index.get(tuple(row[:5]))
        if key is not None:
            cal_existing.setdefault((key, int(row[6])), []).append(row)
    done = {k: list(v.values()) for k, v in existing.items() if len(v) == per_task}
    cal_done = {k: v for k, v in cal_existing.items() if k in done}

    cache = BoundCache(out / "bounds.json")
    bounds = {}
    tasks = []
    for i, s in enumerate(plan.scenarios):
        todo = [r for r in range(s.n_sim) if (i, r) not in done]
        if not todo:
            continue
        bounds[i] = cache.get(s)
        tuned = {i: _tune_per_scenario(plan, i, bounds[i])} if plan.tune == "per_scenario" else {}
        tasks += [(plan, i, r, bounds[i], tuned) for r in todo]

    if tasks:
        # start fresh partial files holding only completed tasks
        _write_csv(partial_path, RESULT_COLUMNS, [r for rows in done.values() for r in rows])
        _write_csv(cal_partial, CALIBRATION_COLUMNS, [r for rows in cal_done.values() for r in rows])

        def collect(result):
            s_idx, rep, rows, cal_rows = result
            done[(s_idx, rep)] = rows
            cal_done[(s_idx, rep)] = cal_rows
            _append_csv(partial_path, RESULT_COLUMNS, rows)
            _append_csv(cal_partial, CALIBRATION_COLUMNS, cal_rows)
            if progress:
                log.info("scenario %d replicate %d done", s_idx, rep)

        if plan.workers == 1:
            for t in tasks:
                collect(_run_task(t))
        else:
            with ProcessPoolExecutor(max_workers=plan.workers) as pool:
                for result in pool.map(_run_task, tasks, chunksize=1):
                    collect(result)

    method_pos = {m: i for i, m in enumerate(plan.methods)}
    metric_pos = {m: i for i, m in enumerate(plan.metrics)}

    ordered = []
    for (s_idx, rep), rows in done.items():
        for r in rows:
            ordered.append(((s_idx, method_pos[r[5]], rep, metric_pos[r[7]]), r))
    ordered.sort(key=lambda x: x[0])
    _write_csv(results_path, RESULT_COLUMNS, [r for _, r in ordered])
    cal_ordered = []
    for (s_idx, rep), rows in cal_done.items():
        for r in rows:
            cal_ordered.append(((s_idx, method_pos.get(r[5], 0), rep, float(r[7])), r))
    cal_ordered.sort(key=lambda x: x[0])
    if "calibration" in plan.metrics or cal_path.exists():
        _write_csv(cal_path, CALIBRATION_COLUMNS, [r for _, r in cal_ordered])
    for p in (partial_path, cal_partial):
        if p.exists():
            p.unlink()
    return results_path


# -- real data -----------------------------------------------------------------

def prepare_reference(ds: SurvivalDataset, name: str | None = None) -> SurvivalDataset:
    """Missing-data handling used for the real-data study.

    PBC: mean imputation; prostate: complete cases. Other data: mean
    imputation of numeric columns after dropping rows with a missing
    categorical value.
    """
    if name == "prostate":
        return drop_incomplete(ds)
    if not ds.missing_mask.any():
        return ds
    cat = [j for j, c in enumerate(ds.columns) if c.kind != "continuous"]
    if cat:
        keep = ~ds.missing_mask[:, cat].any(axis=1)
        ds = ds.subset(np.flatnonzero(keep))
    return impute_column_means(ds)


def run_real_data_bootstrap(dataset, B: int = 1000, methods: Sequence[str] = METHODS,
                            seed: int = 20240101, n_trees: int = 500, treatment: str | None = None,
                            interactions: Sequence[tuple[str, str]] | None = None,
                            metrics: Sequence[str] = ("c_index", "ibs"),
                            alpha: float = 0.05) -> list[dict]:
    """.632+ bootstrap table (one row per method and metric).

    ``dataset`` is a bundled reference name or a loaded dataset. The Cox
    model uses stepwise AIC selection with the treatment forced in; for the
    prostate data the treatment interactions are candidate terms.
    """
    name = dataset if isinstance(dataset, str) else None
    ds = load_reference(dataset, complete_cases=False) if name else dataset
    ds = prepare_reference(ds, name)
    if name in REFERENCES:
        treatment = treatment or REFERENCES[name]["treatment"]
        if interactions is None:
            interactions = interaction_pairs(name)
    interactions = tuple(interactions or ())
    rows = []
    for k, method in enumerate(methods):
        if method == "cox":
            spec = CoxSpec(interactions=interactions, stepwise=True,
                           forced=(treatment,) if treatment else ())
        else:
            spec = parse_method(method, n_trees=n_trees)
        rng = derive_rng(seed, 0, f"bootstrap:{method}")
        t0 = time.perf_counter()
        res = run_bootstrap_metrics(ds, spec, metrics, B, rng, alpha)
        elapsed = time.perf_counter() - t0
        for metric in metrics:
            rec = {"dataset": name or "custom", "method": method, **res[metric].to_record()}
            rec["seconds"] = elapsed
            rows.append(rec)
    return rows


# -- plot data -----------------------------------------------------------------

def _five_numbers(v: np.ndarray):
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    iqr = q[3] - q[1]
    out = v[(v < q[1] - 1.5 * iqr) | (v > q[3] + 1.5 * iqr)]
    return q, np.sort(out)


def boxplot_stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    q, outliers = _five_numbers(v)
    return {"n": len(v), "min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4],
            "outliers": list(outliers)}


def emit_plot_data(results, out_dir) -> dict[str, Path]:
    """Boxplot, calibration-band and timing CSVs from a results directory or CSV."""
    results = Path(results)
    res_csv = results / "results.csv" if results.is_dir() else results
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = _read_csv(res_csv, RESULT_COLUMNS)
    if not rows:
        raise ValueError(f"{res_csv}: no result rows")

    groups: dict[tuple, list[float]] = {}
    timing: dict[tuple, list[tuple[float, float]]] = {}
    for r in rows:
        if r[11] == "1":
            continue
        groups.setdefault(tuple(r[:6]) + (r[7],), []).append(float(r[8]))
        if r[9] and r[10]:
            timing.setdefault((r[5], r[1], r[6], r[0], r[2], r[3], r[4]), []).append(
                (float(r[9]), float(r[10])))

    box_rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        st = boxplot_stats(groups[key])
        box_rows.append(list(key) + [str(st["n"])] + [repr(float(st[k])) for k in
                                                      ("min", "q1", "median", "q3", "max")]
                        + [";".join(repr(float(x)) for x in st["outliers"])])
    paths = {"boxplot": out / "boxplot.csv"}
    _write_csv(paths["boxplot"], RESULT_COLUMNS[:6] + ("metric", "n", "min", "q1", "median", "q3",
                                                        "max", "outliers"), box_rows)

    # fit time is shared by the metrics of one replicate; count it once
    per_rep: dict[tuple, tuple[float, float]] = {}
    for key, vals in timing.items():
        per_rep[key] = (vals[0][0], sum(v[1] for v in vals))
    agg: dict[tuple, list[tuple[float, float]]] = {}
    for key, v in per_rep.items():
        agg.setdefault((key[0], key[1]), []).append(v)
    t_rows = []
    for (method, n), vals in sorted(agg.items(), key=lambda kv: (kv[0][0], int(kv[0][1]))):
        fit = float(np.mean([v[0] for v in vals]))
        pred = float(np.mean([v[1] for v in vals]))
        t_rows.append([method, n, str(len(vals)), repr(fit), repr(pred), repr(fit + pred)])
    paths["timing"] = out / "timing.csv"
    _write_csv(paths["timing"], ("method", "n_train", "n_replicates", "mean_fit_ms",
                                 "mean_predict_ms", "mean_total_ms"), t_rows)

    cal_csv = res_csv.parent / "calibration.csv"
    cal_rows = _read_csv(cal_csv, CALIBRATION_COLUMNS)
    if cal_rows:
        bands: dict[tuple, list[float]] = {}
        for r in cal_rows:
            bands.setdefault(tuple(r[:6]) + (float(r[7]),), []).append(float(r[8]))
        b_rows = []
        for key in sorted(bands, key=lambda k: tuple(str(x) for x in k[:-1]) + (k[-1],)):
            v = np.asarray(bands[key])
            lo, hi = np.quantile(v, [0.025, 0.975], method="linear")
            b_rows.append(list(key[:-1]) + [repr(key[-1]), str(len(v)), repr(float(v.mean())),
                                             repr(float(lo)), repr(float(hi))])
        paths["calibration"] = out / "calibration_bands.csv"
        _write_csv(paths["calibration"], CALIBRATION_COLUMNS[:6] + ("p", "n", "mean_observed",
                                                                     "low", "high"), b_rows)
    return paths
