# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Running a benchmark plan
#
# A plan is a list of scenarios plus methods and metrics. Every
# (scenario, replicate) pair is an independent task; results are written
# as CSV, sorted so the worker count does not change a byte.

# +
import csv
import tempfile
from pathlib import Path

from survbench import simgen
from survbench.runner import ExperimentPlan, emit_plot_data, run_scenarios
from survbench.simgen import HazardSpec, ScenarioConfig

out = Path(tempfile.mkdtemp())
sc = ScenarioConfig("prostate", n_train=200, n_test=300, censoring_target=0.6,
                    hazard=HazardSpec(simgen.LAMBDA_PC, 2.0, 5.0), n_sim=4)
plan = ExperimentPlan((sc,), methods=("cox", "rsf:logrank", "rsf:extratrees"),
                      metrics=("c_index", "ibs", "calibration"), out_dir=str(out),
                      n_trees=100, tune="none")
results = run_scenarios(plan)
# -

with open(results, newline="") as fh:
    rows = list(csv.DictReader(fh))
print(len(rows), "rows")
for r in rows[:6]:
    print(r["method"], r["replicate"], r["metric"], round(float(r["value"]), 4), r["fit_ms"])

# Plot-ready summaries: boxplot statistics, timing, calibration bands.

for kind, path in emit_plot_data(out, out / "plots").items():
    print(kind, "->", path.name)

# The same run from a shell:
#
#     survbench simulate --plan plan.json --out results --workers 4
#     survbench plots --results results --out results/plots
#     survbench bootstrap --data pbc.csv --schema pbc.schema.json --B 1000 --out results
