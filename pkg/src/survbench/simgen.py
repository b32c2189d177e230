"""Synthetic randomized-trial data.

Covariates come from a Gaussian copula fitted to a reference trial,
survival times from a Weibull proportional-hazards model by cumulative
hazard inversion, and censoring times from ``Uniform(0, b)`` with ``b``
calibrated to a target censoring proportion.
"""
from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .dataio import ColumnSpec, SurvivalDataset, drop_incomplete, impute_column_means, load_reference

__all__ = [
    "Marginal",
    "CopulaModel",
    "HazardSpec",
    "ScenarioConfig",
    "BETA_PBC",
    "BETA_PC",
    "LAMBDA_PBC",
    "LAMBDA_PC",
    "derive_rng",
    "estimate_correlation",
    "nearest_correlation",
    "fit_marginals",
    "sample_covariates",
    "simulate_survival_times",
    "calibrate_censoring_bound",
    "generate_dataset",
    "reference_copula",
    "add_interactions",
]

# Coefficients on the reference column order; the first entry (treatment)
# is replaced by the scenario's treatment effect.
PBC_TERMS = ("trt", "age", "sex", "ascites", "hepato", "spiders", "edema", "bili", "chol",
             "albumin", "copper", "alk.phos", "ast", "trig", "platelet", "protime", "stage")
BETA_PBC = np.array([0.0, 0.026, -0.218, 0.338, 0.227, 0.071, 0.481, 0.086, 0.0004, -0.799,
                     0.003, -0.00002, 0.004, -0.002, 0.0002, 0.276, 0.365])
PC_TERMS = ("rx", "age", "wt", "sbp", "dbp", "sz", "ap", "hg", "sg", "pf", "hx", "bm", "ekg",
            "rx:age", "rx:bm", "rx:ap")
BETA_PC = np.array([0.0, -0.006, -0.01, -0.016, 0.02, 0.014, 0.0001, -0.006, 0.074, 0.333,
                    0.467, 0.63, 0.316, 0.059, -0.612, -0.0003])
LAMBDA_PBC = 2241.74
LAMBDA_PC = 39.2

REFERENCES = {
    "pbc": {"terms": PBC_TERMS, "beta": BETA_PBC, "lam": LAMBDA_PBC, "treatment": "trt",
            "treatment_levels": (0.0, 1.0)},
    "prostate": {"terms": PC_TERMS, "beta": BETA_PC, "lam": LAMBDA_PC, "treatment": "rx",
                 "treatment_levels": (0.0, 1.0)},
}

CONTINUOUS_FAMILIES = ("normal", "lognormal", "gamma", "weibull")
PILOT_SIZE = 100_000


def derive_rng(seed: int, replicate: int, purpose: str) -> np.random.Generator:
    """Independent stream for ``(seed, replicate, purpose)``."""
    tag = zlib.crc32(purpose.encode())
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(replicate), tag))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Marginal:
    """Univariate marginal. ``params`` follow scipy conventions.

    normal: (loc, scale); lognormal: (sigma, scale); gamma: (shape, scale);
    weibull: (shape, scale). ``loc`` shifts the positive families.
    bernoulli/categorical use ``levels`` and ``probs``.
    """

    name: str
    family: str
    params: tuple[float, ...] = ()
    loc: float = 0.0
    levels: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family in ("bernoulli", "categorical"):
            if len(self.levels) != len(self.probs) or not self.levels:
                raise ValueError(f"{self.name}: levels and probs must match")
            if self.family == "bernoulli" and len(self.levels) != 2:
                raise ValueError(f"{self.name}: bernoulli needs two levels")
            if abs(sum(self.probs) - 1.0) > 1e-9 or min(self.probs) < 0:
                raise ValueError(f"{self.name}: probabilities must sum to 1")
        elif self.family in CONTINUOUS_FAMILIES:
            if len(self.params) != 2 or self.params[1] <= 0 or (
                    self.family != "normal" and self.params[0] <= 0):
                raise ValueError(f"{self.name}: invalid {self.family} parameters {self.params}")
        else:
            raise ValueError(f"{self.name}: unknown family {self.family!r}")

    @property
    def discrete(self) -> bool:
        return self.family in ("bernoulli", "categorical")

    def dist(self):
        a, b = self.params
        return {
            "normal": lambda: stats.norm(loc=a, scale=b),
            "lognormal": lambda: stats.lognorm(a, loc=self.loc, scale=b),
            "gamma": lambda: stats.gamma(a, loc=self.loc, scale=b),
            "weibull": lambda: stats.weibull_min(a, loc=self.loc, scale=b),
        }[self.family]()

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.discrete:
            cum = np.cumsum(self.probs)
            idx = np.minimum(np.searchsorted(cum, u, side="right"), len(self.levels) - 1)
            return np.asarray(self.levels, dtype=float)[idx]
        return self.dist().ppf(u)

    def cdf(self, x) -> np.ndarray:
        if self.discrete:
            cum = np.cumsum(self.probs)
            idx = np.searchsorted(np.asarray(self.levels), x, side="right") - 1
            return np.where(idx >= 0, cum[np.clip(idx, 0, None)], 0.0)
        return self.dist().cdf(x)

    def mean(self) -> float:
        if self.discrete:
            return float(np.dot(self.levels, self.probs))
        return float(self.dist().mean())

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class CopulaModel:
    R: np.ndarray
    marginals: tuple[Marginal, ...]

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        d = len(self.marginals)
        if R.shape != (d, d):
            raise ValueError(f"correlation matrix must be {d}x{d}")
        if not np.allclose(R, R.T, atol=1e-12) or not np.allclose(np.diag(R), 1.0):
            raise ValueError("R must be symmetric with unit diagonal")
        if np.linalg.eigvalsh(R).min() < -1e-8:
            raise ValueError("R is not positive semi-definite")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "marginals", tuple(self.marginals))

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.marginals]

    def means(self) -> np.ndarray:
        return np.array([m.mean() for m in self.marginals])


@dataclass(frozen=True)
class HazardSpec:
    lam: float
    gamma_control: float = 1.0
    gamma_treated: float | None = None

    def __post_init__(self):
        if self.gamma_treated is None:
            object.__setattr__(self, "gamma_treated", self.gamma_control)
        if self.lam <= 0 or self.gamma_control <= 0 or self.gamma_treated <= 0:
            raise ValueError("Weibull scale and shapes must be positive")

    @property
    def proportional(self) -> bool:
        return self.gamma_control == self.gamma_treated

    @property
    def label(self) -> str:
        if self.proportional:
            return f"{self.gamma_control:g}"
        return f"{self.gamma_control:g}/{self.gamma_treated:g}"


@dataclass(frozen=True)
class ScenarioConfig:
    reference: str = "pbc"
    n_train: int = 200
    n_test: int = 500
    censoring_target: float = 0.30
    beta_treatment: float = -0.4
    hazard: HazardSpec = None
    beta: tuple[float, ...] | None = None
    n_sim: int = 500
    seed: int = 20240101

    def __post_init__(self):
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown reference {self.reference!r}")
        ref = REFERENCES[self.reference]
        if self.hazard is None:
            object.__setattr__(self, "hazard", HazardSpec(ref["lam"], 1.0))
        elif isinstance(self.hazard, dict):
            object.__setattr__(self, "hazard", HazardSpec(**self.hazard))
        beta = np.array(ref["beta"] if self.beta is None else self.beta, dtype=float)
        if len(beta) != len(ref["terms"]):
            raise ValueError(f"beta must have {len(ref['terms'])} entries")
        beta[0] = self.beta_treatment
        object.__setattr__(self, "beta", tuple(float(b) for b in beta))
        if not 0 < self.censoring_target < 1:
            raise ValueError("censoring_target must lie in (0, 1)")
        if self.n_train < 2 or self.n_test < 2:
            raise ValueError("sample sizes must be at least 2")

    @property
    def terms(self) -> tuple[str, ...]:
        return REFERENCES[self.reference]["terms"]

    def key(self) -> dict:
        return {"reference": self.reference, "n_train": self.n_train,
                "censoring": self.censoring_target, "beta_treatment": self.beta_treatment,
                "gamma_spec": self.hazard.label}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = list(self.beta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if isinstance(d.get("hazard"), dict):
            d["hazard"] = HazardSpec(**d["hazard"])
        if d.get("beta") is not None:
            d["beta"] = tuple(d["beta"])
        return cls(**d)

    def generation_hash(self) -> str:
        """Hash of the fields that determine the censoring bound."""
        d = {"reference": self.reference, "censoring": self.censoring_target,
             "beta": [round(b, 12) for b in self.beta], "hazard": asdict(self.hazard),
             "seed": self.seed}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def nearest_correlation(R, tol: float = 1e-12) -> np.ndarray:
    """Clip negative eigenvalues at zero and rescale to a unit diagonal.

    Returns the input unchanged when it is already positive semi-definite.
    """
    R = np.asarray(R, dtype=float)
    R = (R + R.T) / 2
    vals, vecs = np.linalg.eigh(R)
    if vals.min() >= -tol:
        return R
    A = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    s = np.sqrt(np.diag(A))
    A = A / np.outer(s, s)
    np.fill_diagonal(A, 1.0)
    return (A + A.T) / 2


def estimate_correlation(ds_or_X) -> np.ndarray:
    """Latent Gaussian correlation from Spearman's rho, repaired to PSD."""
    X = np.asarray(getattr(ds_or_X, "X", ds_or_X), dtype=float)
    if X.shape[0] < 3:
        raise ValueError("need at least 3 rows")
    if np.isnan(X).any():
        raise ValueError("missing values present")
    const = np.flatnonzero(np.ptp(X, axis=0) == 0)
    if const.size:
        raise ValueError(f"constant columns {const.tolist()} have undefined correlation")
    rho = stats.spearmanr(X).statistic if X.shape[1] > 2 else np.array(
        [[1.0, stats.spearmanr(X[:, 0], X[:, 1]).statistic], [0, 1.0]])
    rho = np.atleast_2d(rho)
    if X.shape[1] == 2:
        rho[1, 0] = rho[0, 1]
    r = 2.0 * np.sin(np.pi * rho / 6.0)
    np.fill_diagonal(r, 1.0)
    return nearest_correlation(r)


def _fit_continuous(name: str, x: np.ndarray, family: str) -> tuple[Marginal, float]:
    if family == "normal":
        loc, scale = stats.norm.fit(x)
        m = Marginal(name, "normal", (float(loc), float(scale)))
        return m, float(stats.norm.logpdf(x, loc, scale).sum())
    # positive families get a shift below the minimum when data touch zero
    loc = 0.0
    if x.min() <= 0:
        gaps = np.diff(np.unique(x))
        loc = float(x.min() - (gaps.min() / 2 if gaps.size else 0.5))
    dist = {"lognormal": stats.lognorm, "gamma": stats.gamma, "weibull": stats.weibull_min}[family]
    shape, _, scale = dist.fit(x, floc=loc)
    m = Marginal(name, family, (float(shape), float(scale)), loc=loc)
    ll = float(m.dist().logpdf(x).sum())
    return m, ll


def fit_marginals(ds: SurvivalDataset, candidates: Sequence[str] = CONTINUOUS_FAMILIES
                  ) -> tuple[Marginal, ...]:
    """Maximum-likelihood marginal per column, picked by lowest AIC.

    Binary and ordinal columns get their observed level frequencies.
    """
    if ds.missing_mask.any():
        raise ValueError("missing values present")
    out = []
    for j, col in enumerate(ds.columns):
        x = ds.X[:, j]
        if col.categorical:
            probs = np.array([np.mean(x == lv) for lv in col.levels])
            probs = probs / probs.sum()
            fam = "bernoulli" if col.kind == "binary" else "categorical"
            out.append(Marginal(col.name, fam, levels=tuple(col.levels), probs=tuple(probs)))
            continue
        best = None
        for fam in candidates:
            try:
                with np.errstate(all="ignore"):
                    m, ll = _fit_continuous(col.name, x, fam)
            except (ValueError, FloatingPointError, RuntimeError):
                continue
            if not np.isfinite(ll):
                continue
            aic = 2 * len(m.params) - 2 * ll
            if best is None or aic < best[0]:
                best = (aic, m)
        if best is None:
            raise RuntimeError(f"{col.name}: no candidate family could be fitted")
        out.append(best[1])
    return tuple(out)


def _factor(R: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(R)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_covariates(model: CopulaModel, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, len(model.marginals))) @ _factor(model.R).T
    u = stats.norm.cdf(z)
    # keep u away from 0/1 so continuous quantiles stay finite
    u = np.clip(u, 1e-12, 1 - 1e-12)
    return np.column_stack([m.ppf(u[:, j]) for j, m in enumerate(model.marginals)])


def simulate_survival_times(X, beta, hazard: HazardSpec, treatment, rng: np.random.Generator,
                            u=None) -> np.ndarray:
    """Weibull PH times by inversion: ``T = lam * (-log U * exp(-lp))**(1/gamma_g)``.

    ``X @ beta`` is the linear predictor; subjects with ``treatment == 1``
    use ``gamma_treated``.
    """
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != len(beta):
        raise ValueError("beta length does not match the design width")
    if hazard.lam <= 0 or hazard.gamma_control <= 0 or hazard.gamma_treated <= 0:
        raise ValueError("Weibull parameters must be positive")
    lp = X @ beta
    if u is None:
        u = rng.uniform(size=len(lp))
    shape = np.where(np.asarray(treatment) == 1, hazard.gamma_treated, hazard.gamma_control)
    return hazard.lam * (-np.log(u) * np.exp(-lp)) ** (1.0 / shape)


def _reference_data(name: str) -> SurvivalDataset:
    ds = load_reference(name)
    ds = impute_column_means(ds) if name == "pbc" else drop_incomplete(ds)
    return ds


@lru_cache(maxsize=None)
def reference_copula(name: str) -> CopulaModel:
    """Copula fitted to the covariates (treatment excluded) of a bundled trial."""
    ds = _reference_data(name)
    trt = REFERENCES[name]["treatment"]
    cov = ds.select([c for c in ds.names if c != trt])
    return CopulaModel(estimate_correlation(cov), fit_marginals(cov))


def add_interactions(ds: SurvivalDataset, pairs: Sequence[tuple[str, str]],
                     centers: dict | None = None) -> SurvivalDataset:
    """Append product columns ``a:b`` with the second factor centered.

    ``centers`` maps ``b`` to its centering value; the sample mean is used
    for factors not listed (pass the training means when building test
    data).
    """
    if not pairs:
        return ds
    centers = centers or {}
    X = [ds.X]
    cols = list(ds.columns)
    for a, b in pairs:
        xb = ds.column(b)
        X.append((ds.column(a) * (xb - centers.get(b, xb.mean())))[:, None])
        cols.append(ColumnSpec(f"{a}:{b}"))
    return SurvivalDataset(cols, np.hstack(X), ds.time, ds.status)


def interaction_pairs(reference: str) -> list[tuple[str, str]]:
    terms = REFERENCES[reference]["terms"]
    return [tuple(t.split(":")) for t in terms if ":" in t]


def design_matrix(reference: str, treatment: np.ndarray, covariates: np.ndarray,
                  centers: np.ndarray) -> np.ndarray:
    """Generating design: treatment, centered covariates and centered interactions."""
    terms = REFERENCES[reference]["terms"]
    names = list(reference_copula(reference).names)
    Z = covariates - centers
    cols = [np.asarray(treatment, dtype=float)]
    for t in terms[1:]:
        if ":" in t:
            a, b = t.split(":")
            left = treatment if a == terms[0] else Z[:, names.index(a)]
            cols.append(np.asarray(left, float) * Z[:, names.index(b)])
        else:
            cols.append(Z[:, names.index(t)])
    return np.column_stack(cols)


def _draw_event_times(scenario: ScenarioConfig, n: int, rng: np.random.Generator):
    cop = reference_copula(scenario.reference)
    trt = rng.binomial(1, 0.5, size=n)
    cov = sample_covariates(cop, n, rng)
    D = design_matrix(scenario.reference, trt, cov, cop.means())
    T = simulate_survival_times(D, scenario.beta, scenario.hazard, trt, rng)
    return trt, cov, T


class CalibrationError(RuntimeError):
    pass


def _censored_fraction(T, V, b):
    return float(np.mean(b * V < T))


def calibrate_censoring_bound(scenario: ScenarioConfig, rng: np.random.Generator | None = None,
                              pilot: int = PILOT_SIZE, tol: float = 0.005,
                              bracket_factor: float = 10.0, max_expand: int = 60) -> float:
    """Upper limit ``b`` of ``Uniform(0, b)`` censoring hitting the target rate.

    Bisection on a fixed pilot of event times paired with censoring times
    ``b * V`` (``V`` uniform, held fixed so the censored fraction is
    monotone in ``b``).
    """
    if rng is None:
        rng = derive_rng(scenario.seed, 0, "censoring-pilot")
    _, _, T = _draw_event_times(scenario, pilot, rng)
    V = rng.uniform(size=pilot)
    target = scenario.censoring_target
    lo, hi = float(T.min()), float(bracket_factor * T.max())
    for _ in range(max_expand):
        if _censored_fraction(T, V, lo) >= target:
            break
        lo /= 2
    else:
        raise CalibrationError(f"cannot reach censoring {target} (too little censoring at b={lo})")
    for _ in range(max_expand):
        if _censored_fraction(T, V, hi) <= target:
            break
        hi *= 2
    else:
        raise CalibrationError(f"cannot reach censoring {target} (too much censoring at b={hi})")
    for _ in range(200):
        mid = math.sqrt(lo * hi) if lo > 0 else (lo + hi) / 2
        frac = _censored_fraction(T, V, mid)
        if abs(frac - target) <= tol:
            return mid
        if frac > target:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"bisection did not reach censoring {target} within {tol}")


class BoundCache:
    """JSON sidecar of calibrated censoring bounds keyed by scenario hash."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._d: dict[str, float] = {}
        if self.path and self.path.exists():
            self._d = json.loads(self.path.read_text())

    def get(self, scenario: ScenarioConfig) -> float:
        key = scenario.generation_hash()
        if key not in self._d:
            self._d[key] = calibrate_censoring_bound(scenario)
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text(json.dumps(self._d, indent=1, sort_keys=True))
        return self._d[key]


def _one_sample(scenario, n, bound, rng, cop) -> SurvivalDataset:
    trt, cov, T = _draw_event_times(scenario, n, rng)
    C = rng.uniform(0.0, bound, size=n)
    time = np.minimum(T, C)
    status = (T <= C).astype(np.int8)
    trt_name = REFERENCES[scenario.reference]["treatment"]
    cols = [ColumnSpec(trt_name, "binary", (0, 1))]
    for m in cop.marginals:
        if m.family == "bernoulli":
            cols.append(ColumnSpec(m.name, "binary", m.levels))
        elif m.family == "categorical":
            cols.append(ColumnSpec(m.name, "ordinal", m.levels))
        else:
            cols.append(ColumnSpec(m.name))
    X = np.column_stack([trt, cov])
    # guard against zero times from underflow
    time = np.maximum(time, np.finfo(float).tiny)
    return SurvivalDataset(cols, X, time, status)


def generate_dataset(scenario: ScenarioConfig, replicate: int, rng=None, bound: float | None = None
                     ) -> tuple[SurvivalDataset, SurvivalDataset]:
    """Independent (train, test) datasets for one replicate.

    With ``rng=None`` the streams derive from ``(scenario.seed, replicate)``
    so each replicate is reproducible on its own.
    """
    if bound is None:
        bound = calibrate_censoring_bound(scenario)
    cop = reference_copula(scenario.reference)
    if rng is None:
        r_train = derive_rng(scenario.seed, replicate, "train")
        r_test = derive_rng(scenario.seed, replicate, "test")
    else:
        r_train, r_test = rng.spawn(2)
    train = _one_sample(scenario, scenario.n_train, bound, r_train, cop)
    test = _one_sample(scenario, scenario.n_test, bound, r_test, cop)
    return train, test


def scenario_grid(references=("pbc", "prostate"), n_train=(100, 200, 400),
                  censoring=(0.30, 0.60), beta_treatment=(0.0, 0.8, -0.4),
                  gammas=((0.8, 0.8), (1.0, 1.0), (2.0, 2.0), (2.0, 5.0)),
                  n_sim: int = 500, n_test: int = 500, seed: int = 20240101) -> list[ScenarioConfig]:
    out = []
    for ref in references:
        lam = REFERENCES[ref]["lam"]
        for g0, g1 in gammas:
            for cens in censoring:
                for bt in beta_treatment:
                    for n in n_train:
                        out.append(ScenarioConfig(ref, n, n_test, cens, bt, HazardSpec(lam, g0, g1),
                                                  n_sim=n_sim, seed=seed))
    return out
