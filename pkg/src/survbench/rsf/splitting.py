"""Splitting rules for survival trees.

All rules return a score where larger is better:

``LogRankTest``
    standardized two-sample log-rank statistic ``|O - E| / sqrt(V)``.
``LogRankScore``
    standardized sum of log-rank scores ``delta_i - H_NA(t_i)``.
``BrierGradient``
    decrease of the IPCW integrated Brier score of the children's own
    Kaplan-Meier curves relative to the parent.
``HarrellC``
    ``|C - 0.5|`` for the child indicator used as a risk score.
``ExtraTrees``
    log-rank statistic at one uniformly drawn cut per variable.
``MaxStat``
    maximally selected log-rank score statistic over the central 10%-90%
    of the node, compared across variables by ``-log`` of its
    Lausen-Schumacher p-value.
"""
from __future__ import annotations

import enum
import math

import numpy as np
from . import _kernels as K

__all__ = ["SplitRule", "NodeData", "split_score", "best_cut", "maxstat_pvalue"]


class SplitRule(str, enum.Enum):
    LogRankTest = "logrank"
    LogRankScore = "logrankscore"
    BrierGradient = "bs.gradient"
    HarrellC = "C"
    ExtraTrees = "extratrees"
    MaxStat = "maxstat"

    @classmethod
    def parse(cls, value) -> "SplitRule":
        if isinstance(value, cls):
            return value
        for r in cls:
            if value in (r.value, r.name) or str(value).lower() in (r.value.lower(), r.name.lower()):
                return r
        raise ValueError(f"unknown splitting rule {value!r}")


MAXSTAT_MINPROP = 0.1
MAXSTAT_MAXPROP = 0.9


def maxstat_pvalue(b: float, minprop: float = MAXSTAT_MINPROP, maxprop: float = MAXSTAT_MAXPROP) -> float:
    """Lausen-Schumacher (1992) approximation for a maximally selected statistic."""
    if b < 1:
        return 1.0
    db = math.exp(-0.5 * b * b) / math.sqrt(2 * math.pi)
    p = 4 * db / b + db * (b - 1 / b) * math.log((maxprop * (1 - minprop)) / ((1 - maxprop) * minprop))
    return min(max(p, 0.0), 1.0)


class NodeData:
    """Per-node event-time bookkeeping shared by all candidate variables."""

    def __init__(self, time, status, censor_surv=None):
        self.time = np.asarray(time, dtype=float)
        self.status = np.asarray(status).astype(np.int8)
        self.event_times = np.unique(self.time[self.status == 1])
        self.m = len(self.event_times)
        self.k_at = np.searchsorted(self.event_times, self.time, side="right").astype(np.int64)
        self.k_before = np.searchsorted(self.event_times, self.time, side="left").astype(np.int64)
        self._censor = censor_surv
        self._brier = None

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    def brier_inputs(self):
        if self._brier is None:
            if self._censor is None:
                raise ValueError("BrierGradient needs the censoring survival function")
            G_t = np.clip(np.atleast_1d(self._censor(self.event_times)), 1e-6, None)
            G_minus = np.clip(np.atleast_1d(self._censor.left_limit(self.time)), 1e-6, None)
            w = np.where(self.status == 1, 1.0 / G_minus, 0.0)
            self._brier = (w, G_t)
        return self._brier


def _scan(rule: SplitRule, node: NodeData, order, positions) -> np.ndarray:
    k_at = node.k_at[order]
    st = node.status[order]
    if rule in (SplitRule.LogRankTest, SplitRule.ExtraTrees):
        return K.logrank_scan(k_at, st, node.m, positions)
    if rule in (SplitRule.LogRankScore, SplitRule.MaxStat):
        return K.logrank_score_scan(k_at, st, node.m, positions)
    if rule is SplitRule.BrierGradient:
        w, G_t = node.brier_inputs()
        return K.brier_scan(k_at, node.k_before[order], st, node.m, positions, w[order], G_t)
    if rule is SplitRule.HarrellC:
        return K.harrell_scan(node.time[order], st, positions)
    raise ValueError(rule)


def split_score(rule, time, status, x, cut: float, censor_surv=None) -> float:
    """Score of sending ``x <= cut`` left and the rest right.

    For ``MaxStat`` this is the raw standardized statistic at the cut (the
    multiplicity correction only applies when comparing variables).
    """
    rule = SplitRule.parse(rule)
    node = NodeData(time, status, censor_surv)
    x = np.asarray(x, dtype=float)
    if node.n_events == 0:
        raise ValueError("node has no events")
    left = x <= cut
    p = int(left.sum())
    if p == 0 or p == node.n:
        raise ValueError("both children must be nonempty")
    order = np.concatenate((np.flatnonzero(left), np.flatnonzero(~left)))
    return float(_scan(rule, node, order, np.array([p], dtype=np.int64))[0])


def _candidate_positions(xs, min_leaf, lo_pos=None, hi_pos=None, cap=64, cap_above=256):
    """Admissible cut positions on sorted values (between distinct values)."""
    n = len(xs)
    lo = max(min_leaf, 1 if lo_pos is None else lo_pos)
    hi = min(n - min_leaf, n - 1 if hi_pos is None else hi_pos)
    if hi < lo:
        return np.empty(0, dtype=np.int64)
    pos = np.arange(lo, hi + 1)
    pos = pos[xs[pos - 1] < xs[pos]]
    if n > cap_above and len(pos) > cap:
        pos = np.unique(pos[np.round(np.linspace(0, len(pos) - 1, cap)).astype(int)])
    return pos.astype(np.int64)


def best_cut(rule: SplitRule, node: NodeData, x, min_leaf: int, rng=None,
             maxstat_correction: bool = True, cap: int = 64):
    """Best ``(score, cut)`` for one variable, or ``None`` if nothing is admissible.

    For MaxStat with correction the returned score is ``-log(p)``.
    """
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(xs)
    if rule is SplitRule.ExtraTrees:
        if xs[0] == xs[-1]:
            return None
        cut = rng.uniform(xs[0], xs[-1])
        p = int(np.searchsorted(xs, cut, side="right"))
        if p < min_leaf or n - p < min_leaf:
            return None
        score = _scan(rule, node, order, np.array([p], dtype=np.int64))[0]
        return float(score), float(cut)
    if rule is SplitRule.MaxStat:
        lo = int(math.ceil(MAXSTAT_MINPROP * n))
        hi = int(math.floor(MAXSTAT_MAXPROP * n))
        pos = _candidate_positions(xs, min_leaf, lo, hi, cap=cap)
    else:
        pos = _candidate_positions(xs, min_leaf, cap=cap)
    if len(pos) == 0:
        return None
    scores = _scan(rule, node, order, pos)
    j = int(np.argmax(scores))
    score = float(scores[j])
    if not np.isfinite(score):
        return None
    cut = 0.5 * (xs[pos[j] - 1] + xs[pos[j]])
    if rule is SplitRule.MaxStat and maxstat_correction:
        score = -math.log(max(maxstat_pvalue(score), 1e-300))
    return score, float(cut)
