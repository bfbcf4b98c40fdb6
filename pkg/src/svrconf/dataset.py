"""Training-set assembly and preprocessing.

A :class:`Dataset` wraps a pandas frame with one row per (instance,
configuration) pair. Column layout::

    instance_id, <feature columns>, <encoding bit columns>, <seed columns>,
    p_raw, p_norm, primal_gap, dual_gap, split
"""

from __future__ import annotations

import io
import json
import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .adapters import RunResult, TargetAdapter
from .configspace import ConfigurationSpace
from .errors import (
    AdapterFailure,
    AllAboveThreshold,
    DataError,
    EmptyInput,
    TooFewInstances,
    UnknownColumn,
    ZeroOptimum,
)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e5
CLIP_MARGIN = 100.0
SENTINEL_FACTOR = 10.0
GAP_EPS = 1e-10
FLOAT_FORMAT = "%.17g"
TAIL_COLUMNS = ("p_raw", "p_norm", "primal_gap", "dual_gap", "split")


@dataclass(frozen=True)
class InstanceFeatures:
    instance_id: str
    raw: Mapping[str, object]
    optimum: float | None = None
    path: str | None = None


@dataclass(frozen=True)
class PerformanceRecord:
    instance_id: str
    config_encoding: tuple[int, ...]
    seed_values: tuple[float, ...]
    p_raw: float
    p_norm: float | None = None
    primal_gap: float | None = None
    dual_gap: float | None = None

    def __post_init__(self):
        if not self.seed_values:
            raise EmptyInput("a record needs at least one seed value")


@dataclass(frozen=True)
class NormalizationParams:
    threshold: float
    clip_value: float
    offset: float
    scale: float

    def apply(self, raw) -> np.ndarray:
        v = np.asarray(raw, dtype=float)
        v = np.where(v > self.threshold, self.clip_value, v)
        if self.scale == 0.0:
            return np.zeros_like(v)
        return (v - self.offset) / self.scale

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "clip_value": self.clip_value,
                "offset": self.offset, "scale": self.scale}

    @classmethod
    def from_dict(cls, d) -> "NormalizationParams":
        return cls(float(d["threshold"]), float(d["clip_value"]), float(d["offset"]), float(d["scale"]))


@dataclass
class Dataset:
    frame: pd.DataFrame
    feature_names: tuple[str, ...]
    config_columns: tuple[str, ...]
    seed_columns: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.config_columns = tuple(self.config_columns)
        self.seed_columns = tuple(self.seed_columns)
        for col in TAIL_COLUMNS:
            if col not in self.frame.columns:
                self.frame[col] = "" if col == "split" else np.nan
        missing = [c for c in ("instance_id",) + self.feature_names + self.config_columns
                   if c not in self.frame.columns]
        if missing:
            raise UnknownColumn(f"dataset frame lacks columns {missing}")
        self.frame = self.frame[list(self.columns)].reset_index(drop=True)
        self.frame["instance_id"] = self.frame["instance_id"].astype(str)
        self.frame["split"] = self.frame["split"].fillna("").astype(str)

    @property
    def columns(self) -> tuple[str, ...]:
        return ("instance_id",) + self.feature_names + self.config_columns + self.seed_columns + TAIL_COLUMNS

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def instances(self) -> list[str]:
        return list(dict.fromkeys(self.frame["instance_id"]))

    def with_frame(self, frame: pd.DataFrame, **changes) -> "Dataset":
        return replace(self, frame=frame, **changes)

    def subset(self, mask) -> "Dataset":
        return self.with_frame(self.frame[np.asarray(mask, dtype=bool)].reset_index(drop=True))

    def rows_of(self, instance_ids: Iterable[str]) -> "Dataset":
        ids = set(map(str, instance_ids))
        return self.subset(self.frame["instance_id"].isin(ids).to_numpy())

    def split_rows(self, tag: str) -> "Dataset":
        return self.subset((self.frame["split"] == tag).to_numpy())

    def instance_features(self) -> dict[str, InstanceFeatures]:
        first = self.frame.drop_duplicates("instance_id")
        return {
            r["instance_id"]: InstanceFeatures(r["instance_id"], {c: r[c] for c in self.feature_names})
            for _, r in first.iterrows()
        }

    def records(self) -> Iterable[PerformanceRecord]:
        def opt(v):
            return None if pd.isna(v) else float(v)

        for _, r in self.frame.iterrows():
            seeds = tuple(float(r[c]) for c in self.seed_columns) or (float(r["p_raw"]),)
            yield PerformanceRecord(
                r["instance_id"],
                tuple(int(r[c]) for c in self.config_columns),
                seeds,
                float(r["p_raw"]),
                opt(r["p_norm"]),
                opt(r["primal_gap"]),
                opt(r["dual_gap"]),
            )

    def design_matrix(self) -> np.ndarray:
        """Concatenated (features, configuration bits) rows, as float."""
        cols = list(self.feature_names + self.config_columns)
        return self.frame[cols].to_numpy(dtype=float)

    def labels(self) -> np.ndarray:
        y = self.frame["p_norm"].to_numpy(dtype=float)
        if np.isnan(y).any():
            raise DataError("dataset has rows without a normalized label")
        return y

    # -- persistence --------------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        text = self.frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        Path(path).write_text(text)
        meta = dict(self.meta)
        meta.update(
            feature_names=list(self.feature_names),
            config_columns=list(self.config_columns),
            seed_columns=list(self.seed_columns),
        )
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path: str | Path) -> "Dataset":
        path = Path(path)
        meta_path = Path(str(path) + ".meta.json")
        if not path.exists():
            raise DataError(f"dataset {path} not found")
        frame = pd.read_csv(path, dtype={"instance_id": str, "split": str}, keep_default_na=True)
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
        else:
            meta = _infer_layout(frame)
        feats = tuple(meta.pop("feature_names"))
        cfg = tuple(meta.pop("config_columns"))
        seeds = tuple(meta.pop("seed_columns", ()))
        return cls(frame, feats, cfg, seeds, meta)


def _infer_layout(frame: pd.DataFrame) -> dict:
    cols = [c for c in frame.columns if c != "instance_id" and c not in TAIL_COLUMNS]
    seeds = [c for c in cols if c.startswith("seed_")]
    bits = [c for c in cols if "=" in c and c not in seeds]
    feats = [c for c in cols if c not in seeds and c not in bits]
    return {"feature_names": feats, "config_columns": bits, "seed_columns": seeds}


# -- scalar preprocessing ------------------------------------------------------


def aggregate_seeds(values: Sequence[float]) -> float:
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise EmptyInput("no seed values to aggregate")
    return float(np.median(vals))


def median_index(values: Sequence[float]) -> int:
    """Index of the lower-middle order statistic (the median run for odd counts)."""
    order = np.argsort(np.asarray(values, dtype=float), kind="stable")
    return int(order[(len(order) - 1) // 2])


def normalize_performance(raw: Sequence[float], threshold: float = DEFAULT_THRESHOLD):
    """Clip values above ``threshold`` to (largest kept value + 100), then map to [0, 1]."""
    v = np.asarray(raw, dtype=float)
    if v.size == 0:
        raise EmptyInput("no performance values")
    below = v[v <= threshold]
    if below.size == 0:
        raise AllAboveThreshold(f"every value exceeds the threshold {threshold:g}")
    clip = float(below.max()) + CLIP_MARGIN
    clipped = np.where(v > threshold, clip, v)
    lo, hi = float(clipped.min()), float(clipped.max())
    params = NormalizationParams(float(threshold), clip, lo, hi - lo)
    return params.apply(v), params


def compute_gaps(opt_value: float, incumbent: float | None, best_bound: float | None,
                 gap_eps: bool = False) -> tuple[float | None, float | None]:
    denom = abs(opt_value)
    if denom == 0.0:
        if not gap_eps:
            raise ZeroOptimum("optimal value is zero; enable the gap epsilon fallback")
        denom = GAP_EPS
    elif gap_eps:
        denom = max(denom, GAP_EPS)
    primal = None if incumbent is None else abs(opt_value - incumbent) / denom
    dual = None if best_bound is None else abs(best_bound - opt_value) / denom
    return primal, dual


# -- dataset transforms --------------------------------------------------------


def normalize_dataset(ds: Dataset, threshold: float = DEFAULT_THRESHOLD) -> tuple[Dataset, NormalizationParams]:
    norm, params = normalize_performance(ds.frame["p_raw"].to_numpy(float), threshold)
    frame = ds.frame.copy()
    frame["p_norm"] = norm
    return ds.with_frame(frame), params


def dedup_group_average(ds: Dataset, kept_feature_columns: Sequence[str],
                        kept_config_columns: Sequence[str]) -> Dataset:
    """Project onto the kept columns and collapse duplicate (f, c) rows.

    Grouping happens within each instance so instance identity (and hence the
    IS/OS tag and fold membership) is preserved. The label of a group is the
    mean of its normalized labels; raw performance and gaps are averaged too.
    """
    kf, kc = tuple(kept_feature_columns), tuple(kept_config_columns)
    unknown = [c for c in kf if c not in ds.feature_names] + [c for c in kc if c not in ds.config_columns]
    if unknown:
        raise UnknownColumn(f"unknown columns {unknown}")
    if ds.frame["p_norm"].isna().any():
        raise DataError("dataset must be normalized before deduplication")
    keys = ["instance_id", *kf, *kc]
    agg = {"p_raw": "mean", "p_norm": "mean", "primal_gap": "mean", "dual_gap": "mean", "split": "first"}
    out = (
        ds.frame[keys + list(agg)]
        .groupby(keys, sort=False, dropna=False)
        .agg(agg)
        .reset_index()
    )
    return Dataset(out, kf, kc, (), dict(ds.meta))


def split_instances(ds: Dataset, os_fraction: float, seed: int) -> Dataset:
    if not 0.0 < os_fraction < 1.0:
        raise DataError("os_fraction must lie strictly between 0 and 1")
    ids = sorted(ds.instances)
    n = len(ids)
    if n < 2:
        raise TooFewInstances(f"need at least 2 instances, got {n}")
    n_os = int(round(os_fraction * n))
    n_os = min(max(n_os, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    os_ids = {ids[i] for i in perm[:n_os]}
    frame = ds.frame.copy()
    frame["split"] = np.where(frame["instance_id"].isin(os_ids), "OS", "IS")
    return ds.with_frame(frame)


def subsample(ds: Dataset, size: int, seed: int) -> Dataset:
    """Uniform random row subsample (original row order kept)."""
    if size >= len(ds):
        return ds
    idx = np.sort(np.random.default_rng(seed).choice(len(ds), size=size, replace=False))
    return ds.with_frame(ds.frame.iloc[idx].reset_index(drop=True))


# -- collection ---------------------------------------------------------------


class Journal:
    """Append-only log of finished (instance, configuration, seed) runs.

    Each line is ``<crc32>\\t<json payload>``; lines whose checksum does not
    match (torn writes) are ignored on reload.
    """

    def __init__(self, path: str | Path | None):
        self.path = None if path is None else Path(path)
        self.done: dict[tuple[str, int, int], dict] = {}
        if self.path is not None and self.path.exists():
            text = self.path.read_text()
            if text and not text.endswith("\n"):
                # close off a torn tail so the next append starts a fresh line
                with open(self.path, "a") as fh:
                    fh.write("\n")
            for line in text.splitlines():
                crc, _, payload = line.partition("\t")
                if not payload or f"{zlib.crc32(payload.encode()):08x}" != crc:
                    continue
                rec = json.loads(payload)
                self.done[(rec["instance"], rec["config"], rec["seed"])] = rec

    def add(self, rec: dict) -> None:
        self.done[(rec["instance"], rec["config"], rec["seed"])] = rec
        if self.path is None:
            return
        payload = json.dumps(rec, sort_keys=True)
        with open(self.path, "a") as fh:
            fh.write(f"{zlib.crc32(payload.encode()):08x}\t{payload}\n")
            fh.flush()


def _run_one(adapter: TargetAdapter, inst: InstanceFeatures, assignment, seed, time_limit_s, sentinel):
    try:
        res = adapter.run(inst, assignment, seed, time_limit_s)
        if res.perf is None or not math.isfinite(res.perf):
            raise AdapterFailure("no performance value reported")
        return {"perf": float(res.perf), "incumbent": res.incumbent, "bound": res.bound, "failed": False}
    except AdapterFailure as exc:
        log.warning("run failed for %s seed %s: %s", inst.instance_id, seed, exc)
        return {"perf": sentinel, "incumbent": None, "bound": None, "failed": True}


def collect(adapter: TargetAdapter, instances: Sequence[InstanceFeatures], space: ConfigurationSpace,
            seeds: Sequence[int], time_limit_s: float, threshold: float = DEFAULT_THRESHOLD,
            jobs: int = 1, journal: str | Path | None = None, gap_eps: bool = False,
            feature_names: Sequence[str] | None = None) -> Dataset:
    """Run every feasible configuration on every instance with every seed.

    Failed runs are recorded with a sentinel raw value of ``10 * threshold``.
    Results already present in ``journal`` are reused, so an interrupted
    collection can be resumed and yields the same dataset.
    """
    if not seeds:
        raise EmptyInput("at least one seed is required")
    seeds = [int(s) for s in seeds]
    rows_idx = space.feasible_indices()
    configs = [space.from_indices(r) for r in rows_idx]
    sentinel = SENTINEL_FACTOR * threshold
    jr = Journal(journal)
    feature_names = tuple(feature_names) if feature_names is not None else (
        tuple(instances[0].raw.keys()) if instances else ()
    )

    todo = [
        (inst, ci, s)
        for inst in instances
        for ci in range(len(configs))
        for s in seeds
        if (inst.instance_id, ci, s) not in jr.done
    ]

    def work(item):
        inst, ci, s = item
        out = _run_one(adapter, inst, configs[ci].as_dict(), s, time_limit_s, sentinel)
        out.update(instance=inst.instance_id, config=ci, seed=s)
        return out

    n_failed = 0
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for rec in pool.map(work, todo):
                jr.add(rec)
                n_failed += rec["failed"]
    else:
        for item in todo:
            rec = work(item)
            jr.add(rec)
            n_failed += rec["failed"]

    seed_cols = tuple(f"seed_{s}" for s in seeds)
    bit_cols = space.bit_names
    rows = []
    for inst in instances:
        for ci, cfg in enumerate(configs):
            runs = [jr.done[(inst.instance_id, ci, s)] for s in seeds]
            perfs = [r["perf"] for r in runs]
            mid = runs[median_index(perfs)]
            primal = dual = None
            if inst.optimum is not None and not mid["failed"]:
                primal, dual = compute_gaps(inst.optimum, mid["incumbent"], mid["bound"], gap_eps)
            row = {"instance_id": inst.instance_id}
            row.update({f: inst.raw[f] for f in feature_names})
            row.update(zip(bit_cols, cfg.encoding))
            row.update(zip(seed_cols, perfs))
            row.update(p_raw=aggregate_seeds(perfs), p_norm=np.nan,
                       primal_gap=np.nan if primal is None else primal,
                       dual_gap=np.nan if dual is None else dual, split="")
            rows.append(row)
    frame = pd.DataFrame(rows, columns=["instance_id", *feature_names, *bit_cols, *seed_cols, *TAIL_COLUMNS])
    meta = {"n_failed_runs": int(sum(r["failed"] for r in jr.done.values())), "threshold": threshold}
    return Dataset(frame, feature_names, bit_cols, seed_cols, meta)


def read_instances(path: str | Path, id_column: str = "instance_id") -> list[InstanceFeatures]:
    """Instance table CSV: an id column, optional ``optimum``/``path`` columns, features."""
    frame = pd.read_csv(path, dtype={id_column: str})
    if id_column not in frame.columns:
        raise UnknownColumn(f"instance file lacks {id_column!r}")
    special = {id_column, "optimum", "path"}
    feats = [c for c in frame.columns if c not in special]
    out = []
    for _, r in frame.iterrows():
        opt = r.get("optimum")
        out.append(InstanceFeatures(
            str(r[id_column]),
            {c: r[c] for c in feats},
            None if opt is None or pd.isna(opt) else float(opt),
            None if pd.isna(r.get("path", np.nan)) else str(r["path"]),
        ))
    return out


def write_instances(path: str | Path, instances: Sequence[InstanceFeatures]) -> None:
    rows = []
    for inst in instances:
        row = {"instance_id": inst.instance_id}
        row.update(inst.raw)
        if inst.optimum is not None:
            row["optimum"] = inst.optimum
        rows.append(row)
    buf = io.StringIO()
    pd.DataFrame(rows).to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    Path(path).write_text(buf.getvalue())
