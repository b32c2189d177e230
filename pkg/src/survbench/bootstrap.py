""".632+ bootstrap estimates of model performance.

For each replicate the model is fit on an n-out-of-n resample and scored
both on the rows left out (``oob``) and on the resample itself
(``boot``). The point estimate blends the apparent score with the mean
out-of-bag score using the overfitting-adaptive .632+ weight; the
interval shifts it by percentiles of ``boot - apparent``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coxph import ConvergenceError
from .dataio import SurvivalDataset
from .metrics import NoComparablePairs, default_tmax, harrell_c, integrated_brier
from .models import fit_model

__all__ = [
    "BootstrapResult",
    "BootstrapError",
    "NOINFO",
    "dot632plus",
    "bootstrap_ci",
    "run_bootstrap",
    "run_bootstrap_metrics",
]

NOINFO = {"c_index": 0.5, "ibs": 0.75}
MAX_DROP_FRACTION = 0.2


class BootstrapError(RuntimeError):
    pass


@dataclass(frozen=True)
class BootstrapResult:
    metric: str
    theta_632plus: float
    ci_low: float
    ci_high: float
    apparent: float
    oob_mean: float
    R: float
    w: float
    noinfo: float
    per_replicate_weights: np.ndarray = field(repr=False)
    B: int
    n_dropped: int = 0
    drop_reasons: tuple[str, ...] = ()
    alpha: float = 0.05
    # the interval as written can come out reversed; these are sorted
    ci_lower_sorted: float = math.nan
    ci_upper_sorted: float = math.nan
    inverted: bool = False

    def to_record(self) -> dict:
        return {
            "metric": self.metric, "theta": self.theta_632plus, "ci_low": self.ci_low,
            "ci_high": self.ci_high, "apparent": self.apparent, "oob_mean": self.oob_mean,
            "R": self.R, "w": self.w, "noinfo": self.noinfo, "B": self.B,
            "n_dropped": self.n_dropped, "inverted": self.inverted,
        }


def dot632plus(apparent: float, oob_mean: float, noinfo: float) -> tuple[float, float, float]:
    """Relative overfitting ``R``, weight ``w`` and the .632+ estimate.

    ``R`` is clipped to [0, 1] and taken as 0 when ``noinfo == apparent``.
    """
    vals = (apparent, oob_mean, noinfo)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"non-finite input {vals}")
    denom = noinfo - apparent
    R = 0.0 if denom == 0 else (oob_mean - apparent) / denom
    R = min(max(R, 0.0), 1.0)
    w = 0.632 / (1.0 - 0.368 * R)
    theta = (1.0 - w) * apparent + w * oob_mean
    return R, w, theta


def bootstrap_ci(theta: float, weights, alpha: float = 0.05) -> tuple[float, float]:
    """``[theta - xi_{1-alpha/2}, theta + xi_{alpha/2}]`` with type-7 quantiles ``xi`` of ``weights``."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("no bootstrap weights")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    hi_q, lo_q = np.quantile(w, [1 - alpha / 2, alpha / 2], method="linear")
    return float(theta - hi_q), float(theta + lo_q)


def _score(model, ds: SurvivalDataset, metric: str, t_max: float) -> float:
    if metric == "c_index":
        return harrell_c(model.risk(ds), ds.time, ds.status)
    if metric == "ibs":
        if not np.any(ds.status == 1):
            raise NoComparablePairs("no events in the evaluation set")
        return integrated_brier(lambda t: model.survival(ds, t), ds, t_max=t_max)
    raise ValueError(f"unknown metric {metric!r}")


def _as_seed(rng) -> int:
    if rng is None:
        return 0
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(0, 2**63 - 1))


def _replicate_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))


def run_bootstrap_metrics(ds: SurvivalDataset, spec, metrics: Sequence[str] = ("c_index", "ibs"),
                          B: int = 200, rng=None, alpha: float = 0.05,
                          t_max: float | None = None) -> dict[str, BootstrapResult]:
    """One bootstrap pass scored on several metrics; see :func:`run_bootstrap`."""
    if B < 2:
        raise ValueError("B must be at least 2")
    for m in metrics:
        if m not in NOINFO:
            raise ValueError(f"unknown metric {m!r}")
    seed = _as_seed(rng)
    t_max = default_tmax(ds.time) if t_max is None else t_max
    n = ds.n

    model = fit_model(spec, ds, _replicate_rng(seed, B))
    apparent = {m: _score(model, ds, m, t_max) for m in metrics}

    oob = {m: [] for m in metrics}
    boot = {m: [] for m in metrics}
    reasons = {m: [] for m in metrics}
    for b in range(B):
        r = _replicate_rng(seed, b)
        idx = r.integers(0, n, size=n)
        held = np.setdiff1d(np.arange(n), idx)
        train, test = ds.subset(idx), ds.subset(held)
        try:
            fitted = fit_model(spec, train, r)
        except (ConvergenceError, ValueError, np.linalg.LinAlgError) as exc:
            for m in metrics:
                reasons[m].append(f"replicate {b}: fit failed ({exc})")
            continue
        for m in metrics:
            try:
                o = _score(fitted, test, m, t_max) if len(held) else math.nan
                if not math.isfinite(o):
                    raise NoComparablePairs("empty out-of-bag set")
                bb = _score(fitted, train, m, t_max)
            except (NoComparablePairs, ZeroDivisionError) as exc:
                reasons[m].append(f"replicate {b}: {exc}")
                continue
            oob[m].append(o)
            boot[m].append(bb)

    out = {}
    for m in metrics:
        dropped = len(reasons[m])
        if dropped > MAX_DROP_FRACTION * B:
            raise BootstrapError(f"{dropped} of {B} replicates dropped for {m}: {reasons[m][:3]}")
        oob_mean = math.fsum(oob[m]) / len(oob[m])
        R, w, theta = dot632plus(apparent[m], oob_mean, NOINFO[m])
        weights = np.asarray(boot[m]) - apparent[m]
        lo, hi = bootstrap_ci(theta, weights, alpha)
        out[m] = BootstrapResult(m, theta, lo, hi, apparent[m], oob_mean, R, w, NOINFO[m],
                                 weights, B, dropped, tuple(reasons[m]), alpha,
                                 min(lo, hi), max(lo, hi), lo > hi)
    return out


def run_bootstrap(ds: SurvivalDataset, spec, metric: str = "c_index", B: int = 200, rng=None,
                  alpha: float = 0.05, t_max: float | None = None) -> BootstrapResult:
    """.632+ bootstrap of ``spec`` (a :class:`~survbench.models.CoxSpec` or ``RsfSpec``).

    Replicates whose held-out rows admit no comparable pair (C index) or
    no event (IBS), or whose fit fails, are dropped and counted. More than
    20% dropped raises :class:`BootstrapError`. The IBS horizon is fixed
    across all evaluations at ``t_max`` (default: 95th percentile of the
    observed times in ``ds``).
    """
    return run_bootstrap_metrics(ds, spec, (metric,), B, rng, alpha, t_max)[metric]
