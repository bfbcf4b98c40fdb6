"""Instance feature engineering and correlation-based column selection."""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import EmptyGroup, InvalidDate, NoVariance, UnknownColumn

WEEK = 7.0
YEAR = 365.25

DATE_FIELDS = (
    "season",
    "weekday",
    "yearday",
    "isWeekend",
    "isHoliday",
    "weekday_sin",
    "weekday_cos",
    "yearday_sin",
    "yearday_cos",
)
STATS = ("min", "max", "mean", "sd", "sum")


def _as_date(value) -> _dt.date:
    if isinstance(value, _dt.datetime):
        return value.date()
    if isinstance(value, _dt.date):
        return value
    try:
        return _dt.date.fromisoformat(str(value).strip())
    except ValueError as exc:
        raise InvalidDate(f"invalid date {value!r}") from exc


def read_holidays(path: str | Path) -> frozenset[_dt.date]:
    days = set()
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                days.add(_as_date(line))
    return frozenset(days)


def expand_date(date, holidays: Iterable = ()) -> dict[str, float]:
    """Calendar decomposition of a date plus sine/cosine encodings.

    Seasons are meteorological (northern hemisphere): 0 winter (Dec-Feb),
    1 spring, 2 summer, 3 autumn. Weekday counts from Monday = 0.
    """
    d = _as_date(date)
    hol = {_as_date(h) for h in holidays}
    weekday = d.weekday()
    yearday = d.timetuple().tm_yday
    season = (d.month % 12) // 3
    return {
        "season": float(season),
        "weekday": float(weekday),
        "yearday": float(yearday),
        "isWeekend": float(weekday >= 5),
        "isHoliday": float(d in hol),
        "weekday_sin": math.sin(2 * math.pi * weekday / WEEK),
        "weekday_cos": math.cos(2 * math.pi * weekday / WEEK),
        "yearday_sin": math.sin(2 * math.pi * yearday / YEAR),
        "yearday_cos": math.cos(2 * math.pi * yearday / YEAR),
    }


def augment_stats(groups: Mapping[str, Sequence[float]]) -> dict[str, float]:
    out = {}
    for name, vals in groups.items():
        arr = np.asarray(vals, dtype=float)
        if arr.size == 0:
            raise EmptyGroup(f"feature group {name!r} is empty")
        out[f"{name}_min"] = float(arr.min())
        out[f"{name}_max"] = float(arr.max())
        out[f"{name}_mean"] = float(arr.mean())
        out[f"{name}_sd"] = float(arr.std())
        out[f"{name}_sum"] = float(arr.sum())
    return out


@dataclass
class Standardizer:
    """Column-wise z-scoring. Columns with ``active`` False pass through."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, active: Sequence[bool] | None = None) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        if active is not None:
            active = np.asarray(active, dtype=bool)
            mean = np.where(active, mean, 0.0)
            scale = np.where(active, scale, 1.0)
        return cls(mean, scale)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


@dataclass
class FeaturePipeline:
    """Turns raw instance feature tables into model-ready numeric columns.

    Steps run in a fixed order: date expansion (if ``date_column`` is set),
    summary statistics over the listed groups, then passthrough of the
    remaining numeric columns. ``standardize`` is honoured at training time,
    where the fitted scaler is stored with the model.
    """

    date_column: str | None = None
    stats_groups: dict[str, list[str]] = field(default_factory=dict)
    holidays: tuple[str, ...] = ()
    standardize: bool = True
    drop: tuple[str, ...] = ()
    output_columns: tuple[str, ...] | None = None

    @property
    def fitted(self) -> bool:
        return self.output_columns is not None

    def _engineer(self, raw: pd.DataFrame) -> pd.DataFrame:
        parts = []
        base = raw.drop(columns=[c for c in self.drop if c in raw.columns])
        if self.date_column is not None:
            if self.date_column not in base.columns:
                raise UnknownColumn(f"date column {self.date_column!r} not found")
            dates = [expand_date(v, self.holidays) for v in base[self.date_column]]
            parts.append(pd.DataFrame(dates, index=base.index, columns=list(DATE_FIELDS)))
            base = base.drop(columns=[self.date_column])
        if self.stats_groups:
            missing = [c for cols in self.stats_groups.values() for c in cols if c not in base.columns]
            if missing:
                raise UnknownColumn(f"stats group columns not found: {missing}")
            rows = [
                augment_stats({g: row[cols].to_numpy(float) for g, cols in self.stats_groups.items()})
                for _, row in base.iterrows()
            ]
            cols = [f"{g}_{s}" for g in self.stats_groups for s in STATS]
            parts.append(pd.DataFrame(rows, index=base.index, columns=cols))
        numeric = base.apply(pd.to_numeric, errors="raise").astype(float)
        return pd.concat([numeric] + parts, axis=1)

    def fit(self, raw: pd.DataFrame) -> "FeaturePipeline":
        out = self._engineer(raw)
        self.output_columns = tuple(out.columns)
        return self

    def transform(self, raw: pd.DataFrame) -> pd.DataFrame:
        if not self.fitted:
            raise RuntimeError("pipeline is not fitted")
        out = self._engineer(raw)
        missing = [c for c in self.output_columns if c not in out.columns]
        if missing:
            raise UnknownColumn(f"pipeline output lacks columns {missing}")
        return out[list(self.output_columns)]

    def fit_transform(self, raw: pd.DataFrame) -> pd.DataFrame:
        return self.fit(raw).transform(raw)

    def to_dict(self) -> dict:
        return {
            "date_column": self.date_column,
            "stats_groups": self.stats_groups,
            "holidays": list(self.holidays),
            "standardize": self.standardize,
            "drop": list(self.drop),
            "output_columns": None if self.output_columns is None else list(self.output_columns),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeaturePipeline":
        out = d.get("output_columns")
        return cls(
            date_column=d.get("date_column"),
            stats_groups={k: list(v) for k, v in (d.get("stats_groups") or {}).items()},
            holidays=tuple(str(h) for h in d.get("holidays", ())),
            standardize=bool(d.get("standardize", True)),
            drop=tuple(d.get("drop", ())),
            output_columns=None if out is None else tuple(out),
        )


@dataclass(frozen=True)
class SelectionScenario:
    name: str
    kept_feature_columns: tuple[str, ...] | None = None
    kept_config_columns: tuple[str, ...] | None = None

    @property
    def is_identity(self) -> bool:
        return self.kept_feature_columns is None and self.kept_config_columns is None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "features": None if self.kept_feature_columns is None else list(self.kept_feature_columns),
            "config": None if self.kept_config_columns is None else list(self.kept_config_columns),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SelectionScenario":
        f, c = d.get("features"), d.get("config")
        return cls(d["name"], None if f is None else tuple(f), None if c is None else tuple(c))


def load_scenarios(path: str | Path) -> dict[str, SelectionScenario]:
    """Scenario file: a JSON object or a list of objects ``{name, features, config}``."""
    with open(path) as fh:
        data = json.load(fh)
    items = data if isinstance(data, list) else data.get("scenarios", [data])
    return {s.name: s for s in map(SelectionScenario.from_dict, items)}


def save_scenarios(path: str | Path, scenarios: Iterable[SelectionScenario]) -> None:
    with open(path, "w") as fh:
        json.dump([s.to_dict() for s in scenarios], fh, indent=2)


def select_by_correlation(ds, max_features: int, redundancy_cutoff: float = 0.95,
                          name: str = "corrFS") -> SelectionScenario:
    """Greedy |Pearson|-ranked feature selection with a redundancy filter.

    Constant columns are dropped first. Ranking ties fall back to column order,
    which keeps the result independent of row order.
    """
    frame = ds.frame
    if len(frame) < 2:
        raise NoVariance("need at least two rows")
    X = frame[list(ds.feature_names)].to_numpy(float)
    y = frame["p_norm"].to_numpy(float)
    sd = X.std(axis=0)
    keep = np.flatnonzero(sd > 0)
    if keep.size == 0:
        raise NoVariance("every feature column is constant")
    Z = (X[:, keep] - X[:, keep].mean(axis=0)) / sd[keep]
    if y.std() > 0:
        yz = (y - y.mean()) / y.std()
        score = np.abs(Z.T @ yz) / len(y)
    else:
        score = np.zeros(keep.size)
    order = sorted(range(keep.size), key=lambda j: (-round(float(score[j]), 12), keep[j]))
    chosen: list[int] = []
    for j in order:
        if len(chosen) >= max_features:
            break
        if any(abs(float(Z[:, j] @ Z[:, c]) / len(y)) > redundancy_cutoff for c in chosen):
            continue
        chosen.append(j)
    cols = tuple(ds.feature_names[keep[j]] for j in chosen)
    return SelectionScenario(name, cols, tuple(ds.config_columns))


def apply_scenario(ds, scenario: SelectionScenario):
    from .dataset import dedup_group_average

    feats = ds.feature_names if scenario.kept_feature_columns is None else scenario.kept_feature_columns
    cfg = ds.config_columns if scenario.kept_config_columns is None else scenario.kept_config_columns
    return dedup_group_average(ds, feats, cfg)
