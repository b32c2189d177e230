"""Cox proportional-hazards regression.

Newton-Raphson on the partial likelihood (Efron or Breslow handling of tied
event times), Breslow baseline hazard, bidirectional stepwise selection by
AIC/BIC and the Grambsch-Therneau test of proportional hazards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .dataio import SurvivalDataset
from .metrics import StepFunction, km_estimator

__all__ = [
    "CoxModel",
    "PhTestResult",
    "ConvergenceError",
    "fit",
    "partial_loglik",
    "breslow_baseline",
    "predict_survival",
    "stepwise_aic",
    "ph_test",
]

DIVERGENCE_BOUND = 20.0


class ConvergenceError(RuntimeError):
    pass


class MonotoneLikelihoodError(ConvergenceError):
    pass


@dataclass(frozen=True, eq=False)
class CoxModel:
    beta: np.ndarray
    cov: np.ndarray
    baseline: StepFunction
    loglik: float
    ties: str
    iterations: int
    converged: bool
    names: tuple[str, ...]
    x_mean: np.ndarray
    n: int
    n_events: int
    dropped: tuple[str, ...] = ()

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def n_params(self) -> int:
        return len(self.beta) - len(self.dropped)

    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.n_params

    def bic(self) -> float:
        return -2.0 * self.loglik + math.log(max(self.n_events, 1)) * self.n_params

    def linear_predictor(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.beta):
            raise ValueError(f"expected {len(self.beta)} covariates, got {X.shape[1]}")
        return (X - self.x_mean) @ self.beta

    def predict_cumhaz(self, X, times) -> np.ndarray:
        H0 = np.atleast_1d(self.baseline(np.asarray(times, dtype=float)))
        return np.exp(self.linear_predictor(X))[:, None] * H0[None, :]

    def predict_survival(self, X, times) -> np.ndarray:
        """Survival probabilities, one row per subject and one column per time."""
        return np.exp(-self.predict_cumhaz(X, times))


@dataclass(frozen=True)
class PhTestResult:
    names: tuple[str, ...]
    chisq: np.ndarray
    df: np.ndarray
    p: np.ndarray
    global_chisq: float
    global_df: int
    global_p: float


class _RiskSets:
    """Event-time bookkeeping shared by likelihood, baseline and PH test."""

    def __init__(self, time, status):
        time = np.asarray(time, dtype=float)
        status = np.asarray(status).astype(bool)
        self.order = np.argsort(time, kind="stable")
        self.t_sorted = time[self.order]
        self.status_sorted = status[self.order]
        death_pos = np.flatnonzero(self.status_sorted)
        self.death_pos = death_pos
        self.event_times, self.death_group, self.d = np.unique(
            self.t_sorted[death_pos], return_inverse=True, return_counts=True)
        # first sorted index whose time is >= each event time
        self.risk_start = np.searchsorted(self.t_sorted, self.event_times, side="left")
        first = np.concatenate(([0], np.cumsum(self.d)[:-1]))
        self.rank_in_group = np.arange(len(death_pos)) - first[self.death_group]


def _revcumsum(a):
    return np.flip(np.cumsum(np.flip(a, axis=0), axis=0), axis=0)


def _efron_terms(Xs, eta, rs: _RiskSets, ties: str, need_hess=True):
    """Log-likelihood, score and information on sorted data.

    A wild trial step can underflow the risk-set sums; the loglik is then
    -inf or nan and the caller halves the step.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _efron_terms_raw(Xs, eta, rs, ties, need_hess)


def _efron_terms_raw(Xs, eta, rs: _RiskSets, ties: str, need_hess=True):
    eta = eta - eta.max() if eta.size else eta
    w = np.exp(eta)
    dp = rs.death_pos
    g = rs.death_group
    S0 = _revcumsum(w)[rs.risk_start]
    S1 = _revcumsum(w[:, None] * Xs)[rs.risk_start]
    m = len(rs.event_times)
    T0 = np.bincount(g, weights=w[dp], minlength=m)
    T1 = np.zeros((m, Xs.shape[1]))
    np.add.at(T1, g, w[dp, None] * Xs[dp])
    frac = rs.rank_in_group / rs.d[g] if ties == "efron" else np.zeros(len(dp))
    den = S0[g] - frac * T0[g]
    num1 = S1[g] - frac[:, None] * T1[g]
    loglik = eta[dp].sum() - np.log(den).sum()
    score = Xs[dp].sum(axis=0) - (num1 / den[:, None]).sum(axis=0)
    if not need_hess:
        return loglik, score, None
    outer = Xs[:, :, None] * Xs[:, None, :]
    S2 = _revcumsum(w[:, None, None] * outer)[rs.risk_start]
    T2 = np.zeros((m,) + outer.shape[1:])
    np.add.at(T2, g, w[dp, None, None] * outer[dp])
    num2 = S2[g] - frac[:, None, None] * T2[g]
    mean1 = num1 / den[:, None]
    info = (num2 / den[:, None, None]).sum(axis=0) - mean1.T @ mean1
    return loglik, score, info


def _per_death_moments(Xs, eta, rs: _RiskSets, ties: str):
    """Per-death weighted covariate means and covariances (Efron-adjusted)."""
    w = np.exp(eta - eta.max())
    dp, g, m = rs.death_pos, rs.death_group, len(rs.event_times)
    S0 = _revcumsum(w)[rs.risk_start]
    S1 = _revcumsum(w[:, None] * Xs)[rs.risk_start]
    outer = Xs[:, :, None] * Xs[:, None, :]
    S2 = _revcumsum(w[:, None, None] * outer)[rs.risk_start]
    T0 = np.bincount(g, weights=w[dp], minlength=m)
    T1 = np.zeros((m, Xs.shape[1]))
    np.add.at(T1, g, w[dp, None] * Xs[dp])
    T2 = np.zeros((m,) + outer.shape[1:])
    np.add.at(T2, g, w[dp, None, None] * outer[dp])
    frac = rs.rank_in_group / rs.d[g] if ties == "efron" else np.zeros(len(dp))
    den = S0[g] - frac * T0[g]
    mean = (S1[g] - frac[:, None] * T1[g]) / den[:, None]
    cov = (S2[g] - frac[:, None, None] * T2[g]) / den[:, None, None] - mean[:, :, None] * mean[:, None, :]
    return mean, cov


def partial_loglik(beta, X, time, status, ties: str = "efron") -> float:
    """Partial log-likelihood at ``beta`` (uncentered covariates)."""
    X = np.asarray(X, dtype=float).reshape(len(time), -1)
    rs = _RiskSets(time, status)
    Xs = X[rs.order]
    return float(_efron_terms(Xs, Xs @ np.asarray(beta, float), rs, ties, need_hess=False)[0])


def _as_arrays(ds):
    return np.asarray(ds.X, float), np.asarray(ds.time, float), np.asarray(ds.status)


def fit(ds: SurvivalDataset, ties: str = "efron", max_iter: int = 50, tol: float = 1e-9,
        init=None, columns: Sequence[str] | None = None) -> CoxModel:
    """Maximize the partial likelihood by Newton-Raphson with step halving.

    Constant columns are dropped (coefficient fixed at 0). Raises
    :class:`MonotoneLikelihoodError` when a coefficient exceeds 20 in
    absolute value and :class:`ConvergenceError` on a singular information
    matrix or when ``max_iter`` is exhausted.
    """
    if ties not in ("efron", "breslow"):
        raise ValueError(f"unknown ties method {ties!r}")
    if columns is not None:
        ds = ds.select(columns)
    X, time, status = _as_arrays(ds)
    if np.isnan(X).any():
        raise ValueError("covariates contain missing values; impute first")
    n, p = X.shape
    n_events = int(status.sum())
    if n_events == 0:
        raise ValueError("no events")
    x_mean = X.mean(axis=0) if n else np.zeros(p)
    active = np.flatnonzero(np.ptp(X, axis=0) > 0) if n else np.arange(p)
    dropped = tuple(ds.names[j] for j in range(p) if j not in set(active))
    Xc = (X - x_mean)[:, active]
    rs = _RiskSets(time, status)
    Xs = Xc[rs.order]
    k = len(active)

    beta = np.zeros(k) if init is None else np.asarray(init, float)[active].copy()
    loglik, score, info = _efron_terms(Xs, Xs @ beta, rs, ties)
    converged = k == 0
    it = 0
    while not converged and it < max_iter:
        it += 1
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular information matrix") from None
        new_beta = beta + step
        new_ll, new_score, new_info = _efron_terms(Xs, Xs @ new_beta, rs, ties)
        halvings = 0
        while (not np.isfinite(new_ll) or new_ll < loglik) and halvings < 30:
            step = step / 2
            new_beta = beta + step
            new_ll, new_score, new_info = _efron_terms(Xs, Xs @ new_beta, rs, ties)
            halvings += 1
        if np.any(np.abs(new_beta) > DIVERGENCE_BOUND):
            bad = [ds.names[active[j]] for j in np.flatnonzero(np.abs(new_beta) > DIVERGENCE_BOUND)]
            raise MonotoneLikelihoodError(f"coefficients diverging for {bad}")
        rel = abs(new_ll - loglik) / max(abs(loglik), 1.0)
        beta, loglik, score, info = new_beta, new_ll, new_score, new_info
        if np.max(np.abs(score)) < tol or rel < 1e-12:
            converged = True
    if not converged:
        raise ConvergenceError(f"no convergence after {max_iter} iterations")

    full_beta = np.zeros(p)
    full_beta[active] = beta
    cov = np.zeros((p, p))
    if k:
        try:
            cov_active = np.linalg.inv(info)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular information matrix") from None
        cov[np.ix_(active, active)] = (cov_active + cov_active.T) / 2
    baseline = _breslow(Xs @ beta, rs)
    return CoxModel(full_beta, cov, baseline, float(loglik), ties, it, converged,
                    tuple(ds.names), x_mean, n, n_events, dropped)


def _breslow(eta_sorted, rs: _RiskSets) -> StepFunction:
    if len(rs.event_times) == 0:
        return StepFunction(np.array([]), np.array([]), left=0.0)
    w = np.exp(eta_sorted)
    risk = _revcumsum(w)[rs.risk_start]
    return StepFunction(rs.event_times, np.cumsum(rs.d / risk), left=0.0)


def breslow_baseline(beta, ds: SurvivalDataset) -> StepFunction:
    """Breslow cumulative baseline hazard at covariates centered on their means."""
    X, time, status = _as_arrays(ds)
    rs = _RiskSets(time, status)
    Xc = (X - X.mean(axis=0)) if len(X) else X
    return _breslow((Xc @ np.asarray(beta, float))[rs.order], rs)


def predict_survival(model: CoxModel, x, t):
    """``S(t | x)``; scalar in, scalar out."""
    out = model.predict_survival(np.atleast_2d(x), np.atleast_1d(t))
    if np.ndim(x) == 1 and np.ndim(t) == 0:
        return float(out[0, 0])
    return out


def _criterion(model: CoxModel, criterion: str) -> float:
    return model.aic() if criterion.upper() == "AIC" else model.bic()


def stepwise_aic(ds: SurvivalDataset, candidates: Sequence[str], criterion: str = "AIC",
                 forced: Sequence[str] = (), **fit_options) -> CoxModel:
    """Bidirectional stepwise selection starting from the forced terms.

    Each step takes the single addition or removal that lowers the
    criterion most; ties go to the move on the earliest column. Moves
    whose fit fails are skipped.
    """
    if criterion.upper() not in ("AIC", "BIC"):
        raise ValueError("criterion must be AIC or BIC")
    order = {nm: i for i, nm in enumerate(ds.names)}
    forced = list(forced)
    candidates = [c for c in candidates if c not in forced]
    current = list(forced)

    def fit_cols(cols, warm=None):
        cols = sorted(cols, key=order.__getitem__)
        init = None
        if warm is not None:
            # start from the current coefficients, new terms at zero
            prev = dict(zip(warm.names, warm.beta))
            init = np.array([prev.get(c, 0.0) for c in cols])
        return fit(ds, columns=cols, init=init, **fit_options)

    best = fit_cols(current)
    best_val = _criterion(best, criterion)
    while True:
        moves = []
        for c in candidates:
            trial = [x for x in current if x != c] if c in current else current + [c]
            try:
                m = fit_cols(trial, best)
            except (ConvergenceError, np.linalg.LinAlgError):
                continue
            moves.append((_criterion(m, criterion), order[c], trial, m))
        if not moves:
            return best
        val, _, trial, m = min(moves, key=lambda mv: (mv[0], mv[1]))
        if val >= best_val - 1e-10:
            return best
        current, best, best_val = trial, m, val


def _km_transform(time, status, rs: _RiskSets) -> np.ndarray:
    """``1 - KM(t-)`` at each death, centered over deaths."""
    km = km_estimator(time, status)
    g = 1.0 - km.left_limit(rs.t_sorted[rs.death_pos])
    return g - g.mean()


def ph_test(model: CoxModel, ds: SurvivalDataset) -> PhTestResult:
    """Grambsch-Therneau score test on the KM time scale.

    Adds ``x_j * g(t)`` terms, with ``g`` the centered KM transform of time,
    and computes score statistics at the fitted coefficients: one per
    covariate (1 df) and one global (df = number of covariates).
    """
    X, time, status = _as_arrays(ds.select(model.names))
    active = [j for j, nm in enumerate(model.names) if nm not in model.dropped]
    p = len(active)
    if p == 0:
        raise ValueError("model has no covariates")
    if status.sum() < max(2, p):
        raise ValueError("fewer events than covariates")
    rs = _RiskSets(time, status)
    Xc = (X - model.x_mean)[:, active]
    Xs = Xc[rs.order]
    beta = model.beta[active]
    mean, cov = _per_death_moments(Xs, Xs @ beta, rs, model.ties)
    g = _km_transform(time, status, rs)
    resid = Xs[rs.death_pos] - mean
    u = np.concatenate((resid.sum(axis=0), (g[:, None] * resid).sum(axis=0)))
    I_bb = cov.sum(axis=0)
    I_bt = (g[:, None, None] * cov).sum(axis=0)
    I_tt = (g[:, None, None] ** 2 * cov).sum(axis=0)
    imat = np.block([[I_bb, I_bt], [I_bt.T, I_tt]])
    chisq = np.empty(p)
    for i in range(p):
        idx = list(range(p)) + [p + i]
        chisq[i] = u[idx] @ np.linalg.solve(imat[np.ix_(idx, idx)], u[idx])
    glob = float(u @ np.linalg.solve(imat, u))
    df = np.ones(p)
    return PhTestResult(tuple(model.names[j] for j in active), chisq, df,
                        stats.chi2.sf(chisq, 1), glob, p, float(stats.chi2.sf(glob, p)))
