import numpy as np
import pytest

from survbench.dataio import ColumnSpec, SurvivalDataset


def make_ds(X, time, status, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or [f"x{j}" for j in range(X.shape[1])]
    return SurvivalDataset([ColumnSpec(n) for n in names], X, time, status)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def exp_data(rng):
    """Exponential PH data with two informative covariates and one noise column."""
    n = 300
    X = rng.normal(size=(n, 3))
    lp = 0.8 * X[:, 0] - 0.5 * X[:, 1]
    T = rng.exponential(size=n) * np.exp(-lp)
    C = rng.exponential(2.0, size=n)
    return make_ds(X, np.minimum(T, C), (T <= C).astype(int))
