import math

import numpy as np
import pytest
from scipy import optimize

from survbench import coxph
from survbench.dataio import impute_column_means, load_reference
from survbench.metrics import km_estimator

from conftest import make_ds


def grid_golden_beta(x, time, status, ties="breslow"):
    """Coarse grid then golden-section refinement of the partial likelihood."""
    X = np.asarray(x, float)[:, None]
    f = lambda b: -coxph.partial_loglik(np.array([b]), X, time, status, ties)  # noqa: E731
    grid = np.linspace(-10, 10, 4001)
    k = int(np.argmin([f(b) for b in grid]))
    if k in (0, len(grid) - 1):
        return None  # maximum outside the search range
    lo, hi = grid[k - 1], grid[k + 1]
    res = optimize.minimize_scalar(f, bracket=(lo, grid[k], hi), method="golden",
                                   options={"xtol": 1e-12})
    return res.x


class TestFit:
    def test_analytic_three_subjects(self):
        ds = make_ds([1.0, 0.0, 1.0], [1, 2, 3], [1, 1, 1])
        for ties in ("breslow", "efron"):
            m = coxph.fit(ds, ties=ties)
            assert m.beta[0] == pytest.approx(-math.log(2) / 2, abs=1e-6)
            assert m.converged

    def test_matches_grid_search(self, rng):
        checked = 0
        while checked < 30:
            n = int(rng.integers(3, 7))
            x = rng.normal(size=n)
            time = rng.permutation(np.arange(1, n + 1)).astype(float)
            status = rng.integers(0, 2, size=n)
            status[np.argmin(time)] = 1
            oracle = grid_golden_beta(x, time, status, "efron")
            if oracle is None:
                continue
            m = coxph.fit(make_ds(x, time, status))
            assert m.beta[0] == pytest.approx(oracle, abs=1e-6)
            checked += 1

    def test_recovers_coefficients(self, exp_data):
        m = coxph.fit(exp_data)
        z = (m.beta - np.array([0.8, -0.5, 0.0])) / m.se
        assert np.all(np.abs(z) < 4)

    def test_cov_symmetric_psd(self, exp_data):
        m = coxph.fit(exp_data)
        assert np.allclose(m.cov, m.cov.T)
        assert np.linalg.eigvalsh(m.cov).min() > 0

    def test_restart_at_mle(self, exp_data):
        m = coxph.fit(exp_data)
        m2 = coxph.fit(exp_data, init=m.beta)
        assert m2.iterations <= 2
        assert np.allclose(m.beta, m2.beta, atol=1e-8)

    def test_scale_equivariance(self, exp_data):
        m = coxph.fit(exp_data)
        X = exp_data.X.copy()
        X[:, 0] *= 7.0
        m2 = coxph.fit(make_ds(X, exp_data.time, exp_data.status))
        assert m2.beta[0] == pytest.approx(m.beta[0] / 7.0, rel=1e-8)
        assert m2.loglik == pytest.approx(m.loglik, abs=1e-8)
        t = np.median(exp_data.time)
        assert np.allclose(m.predict_survival(exp_data.X, [t]), m2.predict_survival(X, [t]), atol=1e-8)

    def test_monotone_likelihood(self):
        x = np.array([1, 1, 1, 0, 0, 0.0])
        ds = make_ds(x, [1, 2, 3, 4, 5, 6], [1, 1, 1, 0, 0, 0])
        with pytest.raises(coxph.MonotoneLikelihoodError):
            coxph.fit(ds)

    def test_constant_column_dropped(self, exp_data):
        X = np.column_stack([exp_data.X, np.ones(exp_data.n)])
        m = coxph.fit(make_ds(X, exp_data.time, exp_data.status))
        assert m.dropped == ("x3",) and m.beta[3] == 0.0

    def test_no_events(self):
        with pytest.raises(ValueError):
            coxph.fit(make_ds([1, 2], [1, 2], [0, 0]))

    def test_statsmodels_agreement(self, exp_data):
        sm = pytest.importorskip("statsmodels.duration.hazard_regression")
        ref = sm.PHReg(exp_data.time, exp_data.X, status=exp_data.status, ties="efron").fit()
        m = coxph.fit(exp_data)
        assert np.allclose(m.beta, ref.params, atol=1e-6)
        assert np.allclose(m.se, ref.bse, rtol=1e-4)


class TestPrediction:
    def test_breslow_hand_values(self):
        H = coxph.breslow_baseline([0.0], make_ds([0.3, 0.7], [1, 2], [1, 1]))
        assert H(1) == pytest.approx(0.5) and H(2) == pytest.approx(1.5)

    def test_breslow_no_events(self):
        H = coxph.breslow_baseline([0.0], make_ds([0.3, 0.7], [1, 2], [0, 0]))
        assert H(10) == 0.0

    def test_survival_at_zero_and_beyond(self, exp_data):
        m = coxph.fit(exp_data)
        x = exp_data.X[0]
        assert coxph.predict_survival(m, x, 0.0) == 1.0
        last = exp_data.time[exp_data.status == 1].max()
        assert coxph.predict_survival(m, x, last) == coxph.predict_survival(m, x, last * 10)
        S = m.predict_survival(exp_data.X[:5], np.linspace(0, last, 20))
        assert np.all(np.diff(S, axis=1) <= 0)

    def test_null_model_matches_km(self, rng):
        n = 1000
        T = rng.exponential(size=n)
        ds = make_ds(np.zeros(n), T, np.ones(n))
        m = coxph.fit(ds)
        grid = np.quantile(T, np.linspace(0.05, 0.95, 19))
        km = km_estimator(T, np.ones(n))(grid)
        assert np.max(np.abs(m.predict_survival(np.zeros((1, 1)), grid)[0] - km)) < 0.02

    def test_dimension_mismatch(self, exp_data):
        m = coxph.fit(exp_data)
        with pytest.raises(ValueError):
            m.linear_predictor(np.zeros((1, 2)))


class TestStepwise:
    def test_zero_candidates_returns_forced(self, exp_data):
        m = coxph.stepwise_aic(exp_data, [], forced=["x0"])
        assert m.names == ("x0",)

    def test_selects_signal(self, exp_data):
        m = coxph.stepwise_aic(exp_data, ["x1", "x2"], forced=["x0"])
        assert "x1" in m.names and "x0" in m.names

    def test_noise_candidate_mostly_excluded(self):
        r = np.random.default_rng(3)
        kept = 0
        for _ in range(40):
            n = 500
            X = r.normal(size=(n, 2))
            T = r.exponential(size=n) * np.exp(-X[:, 0])
            m = coxph.stepwise_aic(make_ds(X, T, np.ones(n)), ["x1"], forced=["x0"])
            kept += "x1" in m.names
        assert kept <= 8

    def test_bic_stricter_than_aic(self, exp_data):
        a = coxph.stepwise_aic(exp_data, ["x0", "x1", "x2"])
        b = coxph.stepwise_aic(exp_data, ["x0", "x1", "x2"], criterion="BIC")
        assert set(b.names) <= set(a.names)

    def test_bad_criterion(self, exp_data):
        with pytest.raises(ValueError):
            coxph.stepwise_aic(exp_data, ["x0"], criterion="Cp")


class TestPhTest:
    def test_structure(self, exp_data):
        m = coxph.fit(exp_data)
        r = coxph.ph_test(m, exp_data)
        assert r.global_df == 3 and len(r.chisq) == 3
        assert 0 <= r.global_p <= 1 and np.all((r.p >= 0) & (r.p <= 1))

    def test_pbc_selected_model_rejects_ph(self):
        ds = impute_column_means(load_reference("pbc"))
        terms = ["trt", "age", "edema", "bili", "albumin", "copper", "protime", "stage"]
        m = coxph.fit(ds.select(terms))
        r = coxph.ph_test(m, ds.select(terms))
        assert r.global_df == 8
        assert r.global_p < 0.05

    def test_scale_invariant_global(self, exp_data):
        m = coxph.fit(exp_data)
        X = exp_data.X.copy()
        X[:, 1] *= 3.0
        ds2 = make_ds(X, exp_data.time, exp_data.status)
        g1 = coxph.ph_test(m, exp_data).global_chisq
        g2 = coxph.ph_test(coxph.fit(ds2), ds2).global_chisq
        assert g1 == pytest.approx(g2, rel=1e-6)
