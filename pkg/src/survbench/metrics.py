"""Survival estimators and prediction-performance measures.

Kaplan-Meier and Nelson-Aalen curves, Harrell's concordance index, the
inverse-probability-of-censoring weighted Brier score and its integral over
time, and Cox-spline calibration curves.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "StepFunction",
    "CalibrationCurve",
    "km_estimator",
    "censoring_km",
    "nelson_aalen",
    "harrell_c",
    "brier_score",
    "integrated_brier",
    "calibration_curve",
    "rcs_basis",
]


class NoComparablePairs(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous piecewise-constant function.

    Takes ``left`` before the first knot and ``values[k]`` on
    ``[knots[k], knots[k+1])``.
    """

    knots: np.ndarray
    values: np.ndarray
    left: float = 0.0

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.shape != values.shape or knots.ndim != 1:
            raise ValueError("knots and values must be 1-d arrays of equal length")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        return self._eval(t, "right")

    def left_limit(self, t):
        """Value just before ``t``."""
        return self._eval(t, "left")

    def _eval(self, t, side):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side=side)
        padded = np.concatenate(([self.left], self.values))
        out = padded[idx]
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CalibrationCurve:
    predicted: np.ndarray
    observed: np.ndarray
    time: float


def _event_table(time, status):
    time = np.asarray(time, dtype=float)
    status = np.asarray(status).astype(bool)
    ut, inv = np.unique(time, return_inverse=True)
    deaths = np.bincount(inv, weights=status, minlength=len(ut))
    counts = np.bincount(inv, minlength=len(ut))
    at_risk = counts[::-1].cumsum()[::-1]
    return ut, deaths, at_risk


def km_estimator(time, status) -> StepFunction:
    """Product-limit survival estimate with jumps at the event times."""
    ut, d, y = _event_table(time, status)
    keep = d > 0
    surv = np.cumprod(1.0 - d[keep] / y[keep])
    return StepFunction(ut[keep], surv, left=1.0)


def censoring_km(time, status) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survival function G."""
    return km_estimator(time, 1 - np.asarray(status))


def nelson_aalen(time, status) -> StepFunction:
    ut, d, y = _event_table(time, status)
    keep = d > 0
    return StepFunction(ut[keep], np.cumsum(d[keep] / y[keep]), left=0.0)


def harrell_c(risk, time, status, return_counts=False):
    """Harrell's concordance index.

    A pair is usable when the shorter follow-up ends in an event and the two
    times differ. It is concordant when that subject has the strictly higher
    risk; equal risks count one half.
    """
    risk = np.asarray(risk, dtype=float)
    time = np.asarray(time, dtype=float)
    status = np.asarray(status).astype(bool)
    if not (len(risk) == len(time) == len(status)):
        raise ValueError("risk, time and status must have equal length")
    conc = ties = comparable = 0.0
    ev = np.flatnonzero(status)
    # blocks of events keep memory bounded on large inputs
    for start in range(0, len(ev), 512):
        rows = ev[start:start + 512]
        later = time[None, :] > time[rows, None]
        comparable += later.sum()
        diff = risk[rows, None] - risk[None, :]
        conc += (later & (diff > 0)).sum()
        ties += (later & (diff == 0)).sum()
    if comparable == 0:
        raise NoComparablePairs("no comparable pairs")
    c = (conc + 0.5 * ties) / comparable
    if return_counts:
        return c, conc, ties, comparable
    return float(c)


def brier_score(pred_surv, time, status, t: float, censor_surv: StepFunction) -> float:
    """IPCW Brier score at horizon ``t``.

    ``pred_surv[i]`` is the predicted probability that subject ``i`` survives
    beyond ``t``. Events before ``t`` are weighted by ``1/G(T_i-)``, subjects
    still at risk after ``t`` by ``1/G(t)``; subjects censored before ``t``
    contribute nothing.
    """
    pred = np.asarray(pred_surv, dtype=float)
    time = np.asarray(time, dtype=float)
    status = np.asarray(status).astype(bool)
    died = (time <= t) & status
    alive = time > t
    total = 0.0
    if died.any():
        g = censor_surv.left_limit(time[died])
        if np.any(g <= 0):
            raise ZeroDivisionError("censoring survival is zero at an event time")
        total += np.sum(pred[died] ** 2 / g)
    if alive.any():
        gt = censor_surv(t)
        if gt <= 0:
            raise ZeroDivisionError(f"censoring survival is zero at t={t}")
        total += np.sum((1.0 - pred[alive]) ** 2) / gt
    return float(total / len(time))


def default_tmax(time) -> float:
    return float(np.quantile(np.asarray(time, dtype=float), 0.95))


def integrated_brier(pred_surv_fn: Callable, ds, t_max: float | None = None,
                     return_curve: bool = False):
    """Time-averaged Brier score on ``[0, t_max]``.

    ``pred_surv_fn(times)`` returns an ``(n, len(times))`` matrix of survival
    probabilities for the subjects of ``ds``. The integrand is evaluated at
    0, the distinct event times below ``t_max`` and ``t_max`` itself and
    integrated with the trapezoid rule. ``t_max`` defaults to the 95th
    percentile of the observed times.
    """
    time, status = np.asarray(ds.time, float), np.asarray(ds.status)
    if t_max is None:
        t_max = default_tmax(time)
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    G = censoring_km(time, status)
    ev = np.unique(time[(status == 1) & (time < t_max)])
    grid = np.concatenate(([0.0], ev[ev > 0], [t_max]))
    S = np.asarray(pred_surv_fn(grid), dtype=float)
    if S.shape != (len(time), len(grid)):
        raise ValueError(f"prediction matrix has shape {S.shape}, "
                         f"expected {(len(time), len(grid))}")
    bs = np.array([brier_score(S[:, k], time, status, t, G) for k, t in enumerate(grid)])
    ibs = float(np.trapezoid(bs, grid) / t_max)
    if return_curve:
        return ibs, grid, bs
    return ibs


def rcs_basis(x, knots) -> np.ndarray:
    """Restricted cubic spline basis (linear term first), Harrell's scaling."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(knots, dtype=float)
    K = len(k)
    if K < 3:
        raise ValueError("need at least 3 knots")
    norm = (k[-1] - k[0]) ** 2
    cols = [x]
    pos3 = lambda u: np.maximum(u, 0.0) ** 3  # noqa: E731
    for j in range(K - 2):
        term = (pos3(x - k[j])
                - pos3(x - k[-2]) * (k[-1] - k[j]) / (k[-1] - k[-2])
                + pos3(x - k[-1]) * (k[-2] - k[j]) / (k[-1] - k[-2]))
        cols.append(term / norm)
    return np.column_stack(cols)


def calibration_curve(pred_probs, ds, t_star: float | None = None,
                      grid_size: int = 50, n_knots: int = 3) -> CalibrationCurve:
    """Observed versus predicted mortality at ``t_star``.

    A Cox model with a restricted cubic spline in ``log(-log(1 - p))`` is fit
    on the test data; its predicted mortality at ``t_star`` for each grid
    value of ``p`` is the observed probability. The grid runs over equally
    spaced quantiles (1% to 99%) of the predictions. ``t_star`` defaults to
    the median observed time.
    """
    from .coxph import fit as cox_fit
    from .dataio import ColumnSpec, SurvivalDataset

    p = np.asarray(pred_probs, dtype=float)
    time, status = np.asarray(ds.time, float), np.asarray(ds.status)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("predicted probabilities must lie strictly inside (0, 1)")
    if t_star is None:
        t_star = float(np.median(time))
    if np.sum((time <= t_star) & (status == 1)) < 10:
        raise ValueError("fewer than 10 events before the calibration time")
    cll = np.log(-np.log1p(-p))
    knots = np.quantile(cll, np.linspace(0.1, 0.9, n_knots))
    if np.ptp(cll) == 0 or np.any(np.diff(knots) <= 0):
        raise ValueError("predictions are too concentrated for a spline calibration fit")
    B = rcs_basis(cll, knots)
    cols = [ColumnSpec(f"rcs{j}") for j in range(B.shape[1])]
    model = cox_fit(SurvivalDataset(cols, B, time, status))
    grid = np.unique(np.quantile(p, np.linspace(0.01, 0.99, grid_size)))
    Bg = rcs_basis(np.log(-np.log1p(-grid)), knots)
    observed = 1.0 - model.predict_survival(Bg, t_star)[:, 0]
    return CalibrationCurve(grid, np.clip(observed, 0.0, 1.0), float(t_star))
