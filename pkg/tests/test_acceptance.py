"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured
numbers before asserting, so ``pytest -v`` output doubles as the report.
The whole module is slow (tens of minutes on one core).
"""
import csv
import math
import time

import numpy as np
import pytest
from scipy import stats

from survbench import coxph, runner, simgen
from survbench.bootstrap import dot632plus
from survbench.metrics import harrell_c, integrated_brier, km_estimator
from survbench.rsf import ForestParams, grow_forest, oob_concordance
from survbench.runner import ExperimentPlan, run_real_data_bootstrap, run_scenarios
from survbench.simgen import HazardSpec, ScenarioConfig, calibrate_censoring_bound, generate_dataset

from conftest import make_ds
from test_coxph import grid_golden_beta
from test_metrics import brute_c

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 20240101


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def _by(rows, method, metric):
    return next(r for r in rows if r["method"] == method and r["metric"] == metric)


def test_criterion_1_pbc_table(report):
    t0 = time.perf_counter()
    rows = run_real_data_bootstrap("pbc", B=200, methods=("cox",), seed=SEED)
    secs = time.perf_counter() - t0
    c, ibs = _by(rows, "cox", "c_index"), _by(rows, "cox", "ibs")
    ok_c = abs(c["theta"] - 0.776) <= 0.03
    ok_ibs = abs(ibs["theta"] - 0.131) <= 0.02
    report(1, ok_c and ok_ibs and secs < 300,
           f"PBC Cox B=200: C {c['theta']:.4f} (target 0.776 +/- 0.03, "
           f"CI {c['ci_low']:.3f}, {c['ci_high']:.3f}) {'ok' if ok_c else 'MISS'}; "
           f"IBS {ibs['theta']:.4f} (target 0.131 +/- 0.02) {'ok' if ok_ibs else 'MISS'}; "
           f"{secs:.0f} s")


def test_criterion_2_prostate_table(report):
    cox = run_real_data_bootstrap("prostate", B=200, methods=("cox",), seed=SEED)
    # 100 trees keeps 200 forest refits within desk time on one core
    rsf = run_real_data_bootstrap("prostate", B=200, methods=("rsf:logrank",), seed=SEED,
                                  n_trees=100, metrics=("ibs",))
    c = _by(cox, "cox", "c_index")
    ibs_cox, ibs_rsf = _by(cox, "cox", "ibs")["theta"], _by(rsf, "rsf:logrank", "ibs")["theta"]
    ok_c = abs(c["theta"] - 0.521) <= 0.03
    ok_dir = ibs_rsf < ibs_cox
    report(2, ok_c and ok_dir,
           f"prostate Cox B=200: C {c['theta']:.4f} (target 0.521 +/- 0.03) "
           f"{'ok' if ok_c else 'MISS'}; IBS rsf:logrank {ibs_rsf:.4f} < cox {ibs_cox:.4f} "
           f"{'ok' if ok_dir else 'MISS'}")


def _median_ibs(path, method):
    with open(path, newline="") as fh:
        vals = [float(r["value"]) for r in csv.DictReader(fh)
                if r["method"] == method and r["metric"] == "ibs" and r["dropped"] == "0"]
    return float(np.median(vals)), len(vals)


def _direction_run(tmp_path, reference, lam, censoring, methods):
    sc = ScenarioConfig(reference, 400, 500, censoring, -0.4, HazardSpec(lam, 2.0, 5.0), n_sim=50)
    plan = ExperimentPlan((sc,), methods=methods, metrics=("ibs",), out_dir=str(tmp_path),
                          workers=4, seed=SEED, n_trees=500, tune="per_scenario")
    t0 = time.perf_counter()
    path = run_scenarios(plan)
    return path, time.perf_counter() - t0


def test_criterion_3_nonph_pbc(report, tmp_path):
    path, secs = _direction_run(tmp_path, "pbc", simgen.LAMBDA_PBC, 0.30, ("cox", "rsf:logrank"))
    cox, n_cox = _median_ibs(path, "cox")
    rsf, n_rsf = _median_ibs(path, "rsf:logrank")
    report(3, cox < rsf and secs < 1800,
           f"PBC-like gamma=(2,5) 30% N=400: median IBS cox {cox:.4f} ({n_cox} reps) vs "
           f"rsf:logrank {rsf:.4f} ({n_rsf} reps); {secs / 60:.1f} min")


def test_criterion_4_interactions_prostate(report, tmp_path):
    path, secs = _direction_run(tmp_path, "prostate", simgen.LAMBDA_PC, 0.60,
                                ("cox", "rsf:extratrees"))
    cox, n_cox = _median_ibs(path, "cox")
    et, n_et = _median_ibs(path, "rsf:extratrees")
    report(4, et < cox,
           f"prostate-like gamma=(2,5) 60% N=400: median IBS rsf:extratrees {et:.4f} "
           f"({n_et} reps) vs cox {cox:.4f} ({n_cox} reps); {secs / 60:.1f} min")


def test_criterion_5_oracles(report):
    rng = np.random.default_rng(SEED)
    c_checked = c_bad = 0
    while c_checked < 1000:
        n = int(rng.integers(2, 9))
        time_ = rng.integers(1, 6, size=n).astype(float)
        status = rng.integers(0, 2, size=n)
        risk = rng.integers(0, 4, size=n).astype(float)
        ref = brute_c(risk, time_, status)
        if ref is None:
            continue
        c_bad += harrell_c(risk, time_, status) != ref
        c_checked += 1

    t = np.array([2.0, 4.0, 5.0, 7.0, 9.0])
    km = km_estimator(t, np.ones(5))
    ibs = integrated_brier(lambda s: np.tile(km(np.asarray(s)), (5, 1)), make_ds(np.zeros(5), t, np.ones(5)))
    area = (0 + .16) / 2 * 2 + (.16 + .24) / 2 * 2 + .24 * 1 + (.24 + .16) / 2 * 2 + .16 * 1.6
    ibs_err = abs(ibs - area / 8.6)

    beta = coxph.fit(make_ds([1.0, 0.0, 1.0], [1, 2, 3], [1, 1, 1])).beta[0]
    analytic_err = abs(beta + math.log(2) / 2)

    grid_err, grid_n = 0.0, 0
    while grid_n < 100:
        n = int(rng.integers(3, 7))
        x = rng.normal(size=n)
        tt = rng.permutation(np.arange(1, n + 1)).astype(float)
        st = rng.integers(0, 2, size=n)
        st[np.argmin(tt)] = 1
        oracle = grid_golden_beta(x, tt, st, "efron")
        if oracle is None:
            continue
        grid_err = max(grid_err, abs(coxph.fit(make_ds(x, tt, st)).beta[0] - oracle))
        grid_n += 1

    ok = c_bad == 0 and ibs_err < 1e-10 and analytic_err < 1e-6 and grid_err < 1e-6
    report(5, ok, f"C index {c_checked - c_bad}/{c_checked} exact; IBS error {ibs_err:.1e}; "
                  f"analytic beta error {analytic_err:.1e}; grid-search max error {grid_err:.1e} "
                  f"over {grid_n} instances")


def test_criterion_6_dot632plus(report):
    R, w, theta = dot632plus(0.8, 0.7, 0.5)
    err = max(abs(R - 0.3333), abs(w - 0.7204), abs(theta - 0.7280))
    report(6, err <= 1e-4, f"(R, w, theta) = ({R:.5f}, {w:.5f}, {theta:.5f}); max error {err:.1e}")


GAMMAS = ((0.8, 0.8), (1.0, 1.0), (2.0, 2.0), (2.0, 5.0))


def test_criterion_7_generator(report):
    rng = np.random.default_rng(SEED)
    worst_ks, worst_cens, cells = 0.0, 0.0, 0
    failures = []
    for ref, lam in (("pbc", simgen.LAMBDA_PBC), ("prostate", simgen.LAMBDA_PC)):
        for g0, g1 in GAMMAS:
            n = 100_000
            trt = np.repeat([0, 1], n // 2)
            T = simgen.simulate_survival_times(np.zeros((n, 1)), [0.0], HazardSpec(lam, g0, g1),
                                               trt, rng)
            for g, grp in ((g0, 0), (g1, 1)):
                cdf = lambda s, g=g: 1 - np.exp(-(np.asarray(s) / lam) ** g)  # noqa: E731
                ks = stats.kstest(T[trt == grp], cdf).statistic
                worst_ks = max(worst_ks, ks)
                if ks >= 0.01:
                    failures.append(f"KS {ref} {g0},{g1} group {grp}: {ks:.4f}")
            for target in (0.30, 0.60):
                sc = ScenarioConfig(ref, 10_000, 2, target, -0.4, HazardSpec(lam, g0, g1),
                                    n_sim=1, seed=SEED)
                bound = calibrate_censoring_bound(sc)
                train, _ = generate_dataset(sc, 1, bound=bound)
                gap = abs((1 - train.status.mean()) - target)
                worst_cens = max(worst_cens, gap)
                cells += 1
                if gap > 0.02:
                    failures.append(f"censoring {ref} {g0},{g1} {target}: off by {gap:.3f}")
    report(7, not failures,
           f"{cells} cells; max KS {worst_ks:.4f} (< 0.01); max censoring gap "
           f"{100 * worst_cens:.2f}pp (<= 2pp)" + (f"; {failures}" if failures else ""))


def _stepwise_ph_p(train):
    cands = [c for c in train.names if c != "trt"]
    m = coxph.stepwise_aic(train, cands, "AIC", ("trt",))
    return coxph.ph_test(m, train).global_p


def test_criterion_8_sanity(report):
    cs = []
    for k in range(20):
        r = np.random.default_rng(SEED + k)
        X = r.normal(size=(200, 5))
        T = r.exponential(size=200)
        C = r.exponential(2.0, size=200)
        ds = make_ds(X, np.minimum(T, C), (T <= C).astype(int))
        cs.append(oob_concordance(grow_forest(ds, ForestParams(seed=k)), ds))
    null_c = float(np.mean(cs))
    ok_null = 0.45 <= null_c <= 0.55

    # Cox selected the way the benchmark selects it: stepwise AIC, treatment forced
    rates = {}
    for label, (g0, g1), reps in (("size", (1.0, 1.0), 200), ("power", (2.0, 5.0), 100)):
        sc = ScenarioConfig("pbc", 400, 2, 0.30, -0.4, HazardSpec(simgen.LAMBDA_PBC, g0, g1),
                            n_sim=reps, seed=SEED)
        bound = calibrate_censoring_bound(sc)
        rej = [_stepwise_ph_p(generate_dataset(sc, r, bound=bound)[0]) < 0.05 for r in range(reps)]
        rates[label] = float(np.mean(rej))
    ok_size = abs(rates["size"] - 0.05) <= 0.03
    ok_power = rates["power"] >= 0.80
    report(8, ok_null and ok_size and ok_power,
           f"null OOB C mean {null_c:.4f} over 20 (range {min(cs):.3f}..{max(cs):.3f}); "
           f"PH global rejection {rates['size']:.3f} under PH (5% +/- 3pp); "
           f"power {rates['power']:.2f} under gamma=(2,5) (>= 0.80)")


def test_criterion_9_worker_independence(report, tmp_path):
    scen = (
        ScenarioConfig("pbc", 100, 100, 0.30, -0.4, HazardSpec(simgen.LAMBDA_PBC, 1.0), n_sim=4),
        ScenarioConfig("prostate", 100, 100, 0.60, 0.8, HazardSpec(simgen.LAMBDA_PC, 2.0, 5.0),
                       n_sim=4),
    )
    outs = {}
    for w in (1, 8):
        plan = ExperimentPlan(scen, methods=("cox", "rsf:logrank", "rsf:extratrees"),
                              metrics=runner.METRICS, out_dir=str(tmp_path / f"w{w}"), workers=w,
                              seed=SEED, n_trees=50, tune="none", record_timing=False)
        res = run_scenarios(plan)
        outs[w] = (res.read_bytes(), (res.parent / "calibration.csv").read_bytes())
    n_rows = outs[1][0].count(b"\n") - 1
    same = outs[1] == outs[8]
    report(9, same and n_rows == 2 * 3 * 4 * 3,
           f"results.csv ({n_rows} rows) and calibration.csv byte-identical at 1 and 8 workers: {same}")
