"""Uniform fit/predict wrappers around the Cox model and the forest.

Both the bootstrap and the simulation runner evaluate "a fitted model" on
new data through two calls: a scalar risk score per subject (larger means
worse prognosis) and a survival matrix at requested times.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import coxph
from .dataio import SurvivalDataset
from .rsf import ForestParams, SplitRule, default_grid, grow_forest, tune_grid
from .simgen import add_interactions

__all__ = ["CoxSpec", "RsfSpec", "FittedModel", "fit_model", "parse_method"]


@dataclass(frozen=True)
class CoxSpec:
    """Cox model options.

    ``columns`` restricts the main effects (all columns when None).
    ``interactions`` are ``(a, b)`` pairs appended as ``a:b`` products.
    With ``stepwise`` the terms are chosen by bidirectional selection on
    ``criterion`` with ``forced`` always kept.
    """
    ties: str = "efron"
    columns: tuple[str, ...] | None = None
    interactions: tuple[tuple[str, str], ...] = ()
    stepwise: bool = False
    criterion: str = "AIC"
    forced: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return "cox"


@dataclass(frozen=True)
class RsfSpec:
    """Forest options; with ``tune`` the grid is searched on the training data first."""
    params: ForestParams = field(default_factory=ForestParams)
    tune: bool = False
    tune_leaf_sizes: tuple[int, ...] = (5, 15, 30)

    @property
    def label(self) -> str:
        return f"rsf:{self.params.rule.value}"


def parse_method(name: str, n_trees: int = 500, tune: bool = False, **cox_options):
    """``"cox"`` or ``"rsf:<rule>"`` to a model spec."""
    if name == "cox":
        return CoxSpec(**cox_options)
    if name.startswith("rsf:"):
        rule = SplitRule.parse(name.split(":", 1)[1])
        return RsfSpec(ForestParams(n_trees=n_trees, rule=rule), tune=tune)
    raise ValueError(f"unknown method {name!r}")


class FittedModel:
    def risk(self, ds: SurvivalDataset) -> np.ndarray:
        raise NotImplementedError

    def survival(self, ds: SurvivalDataset, times) -> np.ndarray:
        raise NotImplementedError


class _FittedCox(FittedModel):
    def __init__(self, model: coxph.CoxModel, spec: CoxSpec, centers: dict):
        self.model = model
        self.spec = spec
        self.centers = centers

    def _X(self, ds):
        full = add_interactions(_main(ds, self.spec), self.spec.interactions, self.centers)
        return full.select(self.model.names).X

    def risk(self, ds):
        return self.model.linear_predictor(self._X(ds))

    def survival(self, ds, times):
        return self.model.predict_survival(self._X(ds), np.atleast_1d(times))


class _FittedForest(FittedModel):
    def __init__(self, forest):
        self.forest = forest

    def _X(self, ds):
        return ds.select(self.forest.names).X

    def risk(self, ds):
        return self.forest.mortality(self._X(ds))

    def survival(self, ds, times):
        return self.forest.predict_survival(self._X(ds), np.atleast_1d(times))


def _main(ds, spec: CoxSpec):
    return ds if spec.columns is None else ds.select(spec.columns)


def fit_model(spec, ds: SurvivalDataset, rng: np.random.Generator | None = None) -> FittedModel:
    """Fit ``spec`` on ``ds``. ``rng`` seeds the forest (and its tuning)."""
    if isinstance(spec, CoxSpec):
        centers = {b: float(ds.column(b).mean()) for _, b in spec.interactions}
        full = add_interactions(_main(ds, spec), spec.interactions, centers)
        if spec.stepwise:
            candidates = [c for c in full.names if c not in spec.forced]
            model = coxph.stepwise_aic(full, candidates, spec.criterion, spec.forced, ties=spec.ties)
        else:
            model = coxph.fit(full, ties=spec.ties)
        return _FittedCox(model, spec, centers)
    if isinstance(spec, RsfSpec):
        rng = rng if rng is not None else np.random.default_rng(spec.params.seed)
        seed = int(rng.integers(0, 2**63 - 1))
        params = replace(spec.params, seed=seed)
        if spec.tune:
            grid = default_grid(ds.X.shape[1], params.n_trees, params.rule,
                                spec.tune_leaf_sizes, seed=seed)
            params, _ = tune_grid(ds, grid)
        return _FittedForest(grow_forest(ds, params))
    raise TypeError(f"unsupported model spec {type(spec).__name__}")
