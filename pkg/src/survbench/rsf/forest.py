"""Random survival forests.

Trees are grown on with-replacement bootstrap samples; each terminal node
stores the Nelson-Aalen cumulative hazard of its in-bag rows on the
forest-wide grid of distinct training event times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..dataio import SurvivalDataset
from ..metrics import censoring_km, harrell_c
from . import _kernels as K
from .splitting import NodeData, SplitRule, best_cut, maxstat_pvalue

__all__ = [
    "ForestParams",
    "SurvivalTree",
    "SurvivalForest",
    "NoOutOfBagTrees",
    "grow_forest",
    "predict_chf",
    "oob_chf",
    "ensemble_mortality",
    "oob_concordance",
    "tune_grid",
    "default_grid",
]


class NoOutOfBagTrees(LookupError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: int | None = None
    min_node_events: int = 1
    min_leaf_size: int = 15
    rule: SplitRule = SplitRule.LogRankTest
    seed: int = 0
    max_candidates: int = 64
    maxstat_correction: bool = True
    maxstat_alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "rule", SplitRule.parse(self.rule))
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be positive")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive")

    def resolve_mtry(self, d: int) -> int:
        m = self.mtry if self.mtry is not None else max(1, math.ceil(math.sqrt(d)))
        if m > d:
            raise ValueError(f"mtry={m} exceeds the number of covariates ({d})")
        return m


@dataclass(frozen=True, eq=False)
class SurvivalTree:
    feature: np.ndarray      # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_row: np.ndarray     # row of ``chf`` for leaves, -1 otherwise
    chf: np.ndarray          # (n_leaves, len(grid))
    in_bag: np.ndarray       # bool over training rows

    @property
    def n_leaves(self) -> int:
        return self.chf.shape[0]

    def apply(self, X) -> np.ndarray:
        """Leaf row reached by each row of ``X``."""
        nodes = K.route(np.ascontiguousarray(X, dtype=float), self.feature, self.threshold,
                        self.left, self.right)
        return self.leaf_row[nodes]

    def predict_chf(self, X) -> np.ndarray:
        return self.chf[self.apply(X)]


@dataclass(frozen=True, eq=False)
class SurvivalForest:
    trees: tuple[SurvivalTree, ...]
    grid: np.ndarray
    params: ForestParams
    names: tuple[str, ...]
    oob_sum: np.ndarray = field(repr=False, default=None)
    oob_count: np.ndarray = field(repr=False, default=None)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_chf(self, X) -> np.ndarray:
        return predict_chf(self, X)

    def predict_survival(self, X, times=None) -> np.ndarray:
        """``exp(-H)`` on the grid, or at ``times`` (step interpolation, H=0 before the grid)."""
        H = predict_chf(self, np.atleast_2d(X))
        if times is None:
            return np.exp(-H)
        idx = np.searchsorted(self.grid, np.asarray(times, dtype=float), side="right")
        H = np.concatenate((np.zeros((H.shape[0], 1)), H), axis=1)[:, idx]
        return np.exp(-H)

    def mortality(self, X) -> np.ndarray:
        return predict_chf(self, np.atleast_2d(X)).sum(axis=1)


def _nelson_aalen_on_grid(time, status, grid) -> np.ndarray:
    ev = status == 1
    if not ev.any():
        return np.zeros(len(grid))
    ut, inv = np.unique(time, return_inverse=True)
    d = np.bincount(inv, weights=ev, minlength=len(ut))
    y = np.bincount(inv, minlength=len(ut))[::-1].cumsum()[::-1]
    H = np.cumsum(d / y)
    idx = np.searchsorted(ut, grid, side="right")
    return np.concatenate(([0.0], H))[idx]


def _tree_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) % 2**64, spawn_key=(b,))))


def _grow_tree(X, time, status, grid, params: ForestParams, mtry: int, rng) -> SurvivalTree:
    n, d = X.shape
    boot = rng.integers(0, n, size=n)
    in_bag = np.zeros(n, dtype=bool)
    in_bag[boot] = True
    Xb, tb, sb = X[boot], time[boot], status[boot]
    G = censoring_km(tb, sb) if params.rule is SplitRule.BrierGradient else None

    feature, threshold, left, right, leaf_row = [], [], [], [], []
    chf = []

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        leaf_row.append(-1)
        return len(feature) - 1

    stack = [(new_node(), np.arange(n))]
    while stack:
        node_id, rows = stack.pop()
        split = _find_split(Xb, tb, sb, rows, params, mtry, G, rng)
        if split is None:
            leaf_row[node_id] = len(chf)
            chf.append(_nelson_aalen_on_grid(tb[rows], sb[rows], grid))
            continue
        j, cut = split
        go_left = Xb[rows, j] <= cut
        feature[node_id] = j
        threshold[node_id] = cut
        lid, rid = new_node(), new_node()
        left[node_id], right[node_id] = lid, rid
        stack.append((rid, rows[~go_left]))
        stack.append((lid, rows[go_left]))

    return SurvivalTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(leaf_row, dtype=np.int64), np.array(chf), in_bag)


def _find_split(Xb, tb, sb, rows, params: ForestParams, mtry, G, rng):
    n_node = len(rows)
    n_events = int(sb[rows].sum())
    if n_events < max(1, params.min_node_events) or n_node < 2 * params.min_leaf_size:
        return None
    node = NodeData(tb[rows], sb[rows], G)
    if node.m == 0:
        return None
    features = rng.choice(Xb.shape[1], size=mtry, replace=False)
    best = None
    for j in features:
        res = best_cut(params.rule, node, Xb[rows, j], params.min_leaf_size, rng=rng,
                       maxstat_correction=params.maxstat_correction, cap=params.max_candidates)
        if res is not None and (best is None or res[0] > best[0]):
            best = (res[0], int(j), res[1])
    if best is None:
        return None
    if params.rule is SplitRule.MaxStat and params.maxstat_alpha is not None:
        p = math.exp(-best[0]) if params.maxstat_correction else maxstat_pvalue(best[0])
        if p > params.maxstat_alpha:
            return None
    return best[1], best[2]


def _training_arrays(ds):
    X = np.ascontiguousarray(ds.X, dtype=float)
    if np.isnan(X).any():
        raise ValueError("covariates contain missing values")
    return X, np.asarray(ds.time, float), np.asarray(ds.status).astype(np.int8)


def grow_forest(ds: SurvivalDataset, params: ForestParams = ForestParams(), rng=None
                ) -> SurvivalForest:
    """Grow ``params.n_trees`` trees; tree ``b`` uses a stream derived from ``(seed, b)``.

    If ``rng`` is given, the forest seed is drawn from it instead of
    ``params.seed``.
    """
    X, time, status = _training_arrays(ds)
    if status.sum() < 2:
        raise ValueError("need at least 2 events to grow a forest")
    if rng is not None:
        params = replace(params, seed=int(rng.integers(0, 2**63 - 1)))
    mtry = params.resolve_mtry(X.shape[1])
    grid = np.unique(time[status == 1])
    trees = []
    oob_sum = np.zeros((len(time), len(grid)))
    oob_count = np.zeros(len(time), dtype=np.int64)
    for b in range(params.n_trees):
        tree = _grow_tree(X, time, status, grid, params, mtry, _tree_rng(params.seed, b))
        out = ~tree.in_bag
        if out.any():
            oob_sum[out] += tree.predict_chf(X[out])
            oob_count[out] += 1
        trees.append(tree)
    return SurvivalForest(tuple(trees), grid, params, tuple(ds.names), oob_sum, oob_count)


def predict_chf(forest: SurvivalForest, x) -> np.ndarray:
    """Mean terminal-node cumulative hazard over all trees, on ``forest.grid``."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != len(forest.names):
        raise ValueError(f"expected {len(forest.names)} covariates, got {X.shape[1]}")
    X = np.ascontiguousarray(X)
    H = np.zeros((X.shape[0], len(forest.grid)))
    for tree in forest.trees:
        H += tree.predict_chf(X)
    H /= forest.n_trees
    return H[0] if single else H


def oob_chf(forest: SurvivalForest, i: int | None = None) -> np.ndarray:
    """Out-of-bag ensemble CHF of training row ``i`` (all rows when ``i`` is None).

    For all rows, rows that are in-bag in every tree get NaN.
    """
    if i is None:
        with np.errstate(invalid="ignore", divide="ignore"):
            out = forest.oob_sum / forest.oob_count[:, None]
        out[forest.oob_count == 0] = np.nan
        return out
    if forest.oob_count[i] == 0:
        raise NoOutOfBagTrees(f"row {i} is in-bag for every tree")
    return forest.oob_sum[i] / forest.oob_count[i]


def ensemble_mortality(forest: SurvivalForest, i: int | None = None):
    """Sum of the out-of-bag CHF over the event-time grid."""
    if i is None:
        return oob_chf(forest).sum(axis=1)
    return float(oob_chf(forest, i).sum())


def oob_concordance(forest: SurvivalForest, ds: SurvivalDataset) -> float:
    mort = ensemble_mortality(forest)
    ok = np.isfinite(mort)
    return harrell_c(mort[ok], ds.time[ok], ds.status[ok])


def default_grid(d: int, n_trees: int = 500, rule=SplitRule.LogRankTest,
                 min_leaf_sizes: Sequence[int] = (5, 15, 30), seed: int = 0) -> list[ForestParams]:
    mtrys = sorted({max(1, int(math.floor(math.sqrt(d)))), max(1, d // 3), d})
    return [ForestParams(n_trees=n_trees, mtry=m, min_leaf_size=s, rule=rule, seed=seed)
            for m in mtrys for s in min_leaf_sizes]


def tune_grid(ds: SurvivalDataset, grid: Sequence[ForestParams], rng=None):
    """Pick the grid point with the highest out-of-bag C index.

    Ties go to smaller ``mtry``, then larger ``min_leaf_size``, then grid
    order. Returns ``(best_params, table)`` with one dict per grid point.
    """
    if not grid:
        raise ValueError("empty tuning grid")
    d = ds.X.shape[1]
    table = []
    for k, params in enumerate(grid):
        try:
            forest = grow_forest(ds, params, rng=rng)
            score = oob_concordance(forest, ds)
        except ValueError as exc:
            table.append({"index": k, "params": params, "oob_c": math.nan, "error": str(exc)})
            continue
        table.append({"index": k, "params": params, "oob_c": score, "error": ""})
    ok = [r for r in table if np.isfinite(r["oob_c"])]
    if not ok:
        raise ValueError("every grid point failed")
    best = min(ok, key=lambda r: (-r["oob_c"], r["params"].resolve_mtry(d),
                                  -r["params"].min_leaf_size, r["index"]))
    return best["params"], table
