"""Random survival forests with six splitting rules."""
from .forest import (
    ForestParams,
    NoOutOfBagTrees,
    SurvivalForest,
    SurvivalTree,
    default_grid,
    ensemble_mortality,
    grow_forest,
    oob_chf,
    oob_concordance,
    predict_chf,
    tune_grid,
)
from .io import load_forest, save_forest
from .splitting import SplitRule, best_cut, split_score

__all__ = [
    "ForestParams",
    "NoOutOfBagTrees",
    "SplitRule",
    "SurvivalForest",
    "SurvivalTree",
    "best_cut",
    "default_grid",
    "ensemble_mortality",
    "grow_forest",
    "load_forest",
    "oob_chf",
    "oob_concordance",
    "predict_chf",
    "save_forest",
    "split_score",
    "tune_grid",
]
