"""Loading, cleaning and summarizing right-censored reference datasets.

Datasets are CSV files described by a small JSON schema::

    {
      "name": "pbc",
      "time": "time",
      "status": {"column": "status", "event_values": [2], "censored_values": [0, 1]},
      "columns": {"age": {"kind": "continuous"},
                  "sex": {"kind": "binary", "levels": [0, 1]}}
    }

Empty cells and the literal ``NA`` are treated as missing.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ColumnSpec",
    "Schema",
    "SurvivalDataset",
    "SummaryTable",
    "load_schema",
    "load_csv",
    "load_reference",
    "impute_column_means",
    "drop_incomplete",
    "summarize",
]

MISSING_TOKENS = frozenset({"", "NA"})
KINDS = ("continuous", "binary", "ordinal")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "continuous"
    levels: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if self.kind == "binary" and (self.levels is None or len(self.levels) != 2):
            raise SchemaError(f"{self.name}: binary columns need exactly 2 levels")
        if self.kind == "ordinal":
            if not self.levels:
                raise SchemaError(f"{self.name}: ordinal columns need levels")
            if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
                raise SchemaError(f"{self.name}: ordinal levels must increase strictly")

    @property
    def categorical(self) -> bool:
        return self.kind != "continuous"


@dataclass(frozen=True)
class Schema:
    columns: tuple[ColumnSpec, ...]
    time: str = "time"
    status: str = "status"
    event_values: tuple[float, ...] = (1.0,)
    censored_values: tuple[float, ...] = (0.0,)
    name: str = ""

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Covariates with follow-up times and event indicators.

    ``X`` holds NaN wherever ``missing_mask`` is true.
    """

    columns: tuple[ColumnSpec, ...]
    X: np.ndarray
    time: np.ndarray
    status: np.ndarray
    missing_mask: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, len(self.columns)) if len(self.columns) else X.reshape(-1, 0)
        time = np.asarray(self.time, dtype=float).ravel()
        status = np.asarray(self.status).ravel().astype(np.int8)
        n = len(time)
        if X.shape != (n, len(self.columns)):
            raise ValueError(f"X has shape {X.shape}, expected {(n, len(self.columns))}")
        if len(status) != n:
            raise ValueError("time and status lengths differ")
        if n and not np.all(time > 0):
            raise ValueError("follow-up times must be strictly positive")
        if not np.isin(status, (0, 1)).all():
            raise ValueError("status must be coded 0 (censored) or 1 (event)")
        mask = np.isnan(X) if self.missing_mask is None else np.asarray(self.missing_mask, bool)
        for arr in (X, time, status, mask):
            arr.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]

    def subset(self, rows) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(self.columns, self.X[rows], self.time[rows],
                               self.status[rows], self.missing_mask[rows])

    def select(self, names: Sequence[str]) -> "SurvivalDataset":
        idx = [self.names.index(nm) for nm in names]
        return SurvivalDataset(tuple(self.columns[i] for i in idx), self.X[:, idx],
                               self.time, self.status, self.missing_mask[:, idx])


@dataclass
class ColumnSummary:
    name: str
    median: float
    mean: float
    sd: float
    min: float
    max: float
    missing: int
    frequencies: dict[float, float] = field(default_factory=dict)


@dataclass
class SummaryTable:
    rows: dict[str, ColumnSummary]

    def __getitem__(self, name: str) -> ColumnSummary:
        return self.rows[name]

    def to_records(self) -> list[dict]:
        out = []
        for r in self.rows.values():
            out.append({"name": r.name, "median": r.median, "mean": r.mean, "sd": r.sd,
                        "min": r.min, "max": r.max, "missing": r.missing,
                        "frequencies": {str(k): v for k, v in r.frequencies.items()}})
        return out


def _schema_from_dict(obj: dict) -> Schema:
    cols = tuple(ColumnSpec(name, spec.get("kind", "continuous"), spec.get("levels"))
                 for name, spec in obj["columns"].items())
    status = obj.get("status", "status")
    if isinstance(status, str):
        status = {"column": status}
    return Schema(
        columns=cols,
        time=obj.get("time", "time"),
        status=status["column"],
        event_values=tuple(float(v) for v in status.get("event_values", [1])),
        censored_values=tuple(float(v) for v in status.get("censored_values", [0])),
        name=obj.get("name", ""),
    )


def load_schema(path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return _schema_from_dict(json.load(fh))


def _parse_cell(raw: str, column: str, line: int) -> float:
    token = raw.strip()
    if token in MISSING_TOKENS:
        return math.nan
    try:
        return float(token)
    except ValueError:
        raise ValueError(f"line {line}, column {column!r}: non-numeric value {raw!r}") from None


def load_csv(path, schema: Schema | Sequence[ColumnSpec]) -> SurvivalDataset:
    """Read a comma-separated file into a :class:`SurvivalDataset`.

    ``schema`` may be a :class:`Schema` or a bare list of column specs, in
    which case the time and status columns are called ``time`` and
    ``status`` with 1 = event.
    """
    if not isinstance(schema, Schema):
        schema = Schema(columns=tuple(schema))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: missing header row") from None
        wanted = [schema.time, schema.status] + [c.name for c in schema.columns]
        absent = [w for w in wanted if w not in header]
        if absent:
            raise ValueError(f"{path}: missing required columns {absent}")
        pos = [header.index(w) for w in wanted]
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            rows.append([_parse_cell(rec[p], wanted[k], line) for k, p in enumerate(pos)])
    data = np.array(rows, dtype=float).reshape(len(rows), len(wanted))

    time = data[:, 0]
    if np.isnan(time).any():
        raise ValueError(f"{path}: missing follow-up time")
    raw_status = data[:, 1]
    is_event = np.isin(raw_status, schema.event_values)
    is_cens = np.isin(raw_status, schema.censored_values)
    bad = ~(is_event | is_cens)
    if bad.any():
        raise ValueError(f"{path}: status value {raw_status[bad][0]!r} is neither an "
                         f"event code {schema.event_values} nor a censoring code")
    X = data[:, 2:]
    for j, col in enumerate(schema.columns):
        if col.levels is not None:
            obs = X[:, j][~np.isnan(X[:, j])]
            stray = ~np.isin(obs, col.levels)
            if stray.any():
                raise ValueError(f"{path}: {col.name} value {obs[stray][0]} not in {col.levels}")
    return SurvivalDataset(schema.columns, X, time, is_event.astype(np.int8))


def load_reference(name: str, complete_cases: bool | None = None) -> SurvivalDataset:
    """Load one of the bundled trials, ``"pbc"`` or ``"prostate"``.

    By default the prostate data are reduced to complete cases and the PBC
    data are returned with their missing cells intact.
    """
    if name not in ("pbc", "prostate"):
        raise ValueError(f"unknown reference dataset {name!r}")
    base = resources.files("survbench") / "data"
    with resources.as_file(base / f"{name}.schema.json") as sp, \
            resources.as_file(base / f"{name}.csv") as cp:
        ds = load_csv(cp, load_schema(sp))
    if complete_cases is None:
        complete_cases = name == "prostate"
    return drop_incomplete(ds) if complete_cases else ds


def data_path(name: str) -> Path:
    return Path(str(resources.files("survbench") / "data" / name))


def impute_column_means(ds: SurvivalDataset) -> SurvivalDataset:
    """Replace missing cells by the mean of the observed cells in their column."""
    mask = ds.missing_mask
    if not mask.any():
        return ds
    X = ds.X.copy()
    for j, col in enumerate(ds.columns):
        miss = mask[:, j]
        if not miss.any():
            continue
        if col.categorical:
            raise ValueError(f"{col.name}: mean imputation is only defined for continuous columns")
        if miss.all():
            raise ValueError(f"{col.name}: every value is missing")
        X[miss, j] = X[~miss, j].mean()
    return SurvivalDataset(ds.columns, X, ds.time, ds.status, np.zeros_like(mask))


def drop_incomplete(ds: SurvivalDataset) -> SurvivalDataset:
    keep = ~ds.missing_mask.any(axis=1)
    return ds if keep.all() else ds.subset(np.flatnonzero(keep))


def _describe(name: str, values: np.ndarray, spec: ColumnSpec | None) -> ColumnSummary:
    obs = values[~np.isnan(values)]
    if obs.size == 0:
        nan = math.nan
        return ColumnSummary(name, nan, nan, nan, nan, nan, int(values.size))
    freqs = {}
    if spec is not None and spec.categorical:
        freqs = {lv: float(np.mean(obs == lv)) for lv in spec.levels}
    sd = float(obs.std(ddof=1)) if obs.size > 1 else 0.0
    return ColumnSummary(name, float(np.median(obs)), float(obs.mean()), sd,
                         float(obs.min()), float(obs.max()), int(values.size - obs.size), freqs)


def summarize(ds: SurvivalDataset) -> SummaryTable:
    """Per-column median, mean, sample sd, range, missing count and level frequencies."""
    if ds.n == 0:
        raise ValueError("cannot summarize an empty dataset")
    rows = {"time": _describe("time", ds.time, None)}
    st = ColumnSpec("status", "binary", (0, 1))
    rows["status"] = _describe("status", ds.status.astype(float), st)
    for j, col in enumerate(ds.columns):
        rows[col.name] = _describe(col.name, ds.X[:, j], col)
    return SummaryTable(rows)


def with_columns(ds: SurvivalDataset, columns, X) -> SurvivalDataset:
    return replace(ds, columns=tuple(columns), X=X, missing_mask=None)
