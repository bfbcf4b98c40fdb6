"""Synthetic targets and random problem generators for closed-loop checks.

A synthetic target is a planted Gaussian-kernel expansion over (features,
configuration bits). It stands in for a real solver: the in-process adapter
evaluates it, and because the ground truth is known for every configuration,
recommendations can be scored exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .adapters import RunResult
from .configspace import ConfigurationSpace, LinearConstraint, Parameter
from .dataset import FLOAT_FORMAT, InstanceFeatures, write_instances
from .features import Standardizer
from .svr import SvrHyper, SvrModel


def grid_space(sizes: Sequence[int], prefix: str = "p") -> ConfigurationSpace:
    params = tuple(
        Parameter(f"{prefix}{i}", tuple(f"v{j}" for j in range(s))) for i, s in enumerate(sizes)
    )
    default = tuple((p.name, p.values[0]) for p in params)
    return ConfigurationSpace(params, (), default)


def random_space(rng: np.random.Generator, min_card: int = 24, max_card: int = 4096,
                 max_constraints: int = 3) -> ConfigurationSpace:
    """Random categorical space with a Cartesian size in [min_card, max_card].

    Constraints are generated around a random anchor configuration so the
    space always keeps at least one feasible point.
    """
    while True:
        P = int(rng.integers(2, 9))
        sizes = rng.integers(2, 5, size=P)
        card = int(np.prod(sizes))
        if min_card <= card <= max_card:
            break
    space = grid_space(sizes)
    anchor = [int(rng.integers(s)) for s in sizes]
    cons = []
    for _ in range(int(rng.integers(0, max_constraints + 1))):
        k = int(rng.integers(2, min(4, P) + 1))
        blocks = rng.choice(P, size=k, replace=False)
        terms = []
        for b in blocks:
            v = int(rng.integers(sizes[b]))
            terms.append((space.parameters[b].name, space.parameters[b].values[v], float(rng.choice([1.0, 2.0, -1.0]))))
        lhs_anchor = sum(c for (p, v, c), b in zip(terms, blocks)
                         if space.parameters[b].values.index(v) == anchor[b])
        rel = str(rng.choice(["<=", ">="]))
        slack = float(rng.integers(0, 2))
        rhs = lhs_anchor + slack if rel == "<=" else lhs_anchor - slack
        cons.append(LinearConstraint(tuple(terms), rel, rhs))
    return ConfigurationSpace(space.parameters, tuple(cons), space.default)


def random_model(rng: np.random.Generator, space: ConfigurationSpace, n_features: int,
                 n_support: int, gamma: float | None = None, C: float = 10.0) -> SvrModel:
    """Random kernel expansion shaped like a trained model (weights sum to zero)."""
    k = space.encoding_length
    feats = rng.normal(size=(n_support, n_features))
    idx = np.stack([rng.integers(s, size=n_support) for s in space.sizes], axis=1)
    bits = space.encodings_of(idx).astype(float)
    beta = rng.uniform(-C / 2, C / 2, size=n_support)
    beta -= beta.mean()
    if gamma is None:
        gamma = float(np.exp(rng.uniform(np.log(0.05), np.log(2.0))))
    mean = np.concatenate([rng.normal(size=n_features), np.zeros(k)])
    scale = np.concatenate([rng.uniform(0.5, 2.0, size=n_features), np.ones(k)])
    return SvrModel(
        support_points=np.hstack([feats, bits]),
        dual_weights=beta,
        bias=float(rng.normal()),
        hyper=SvrHyper.of(C, 0.01, gamma),
        scaler=Standardizer(mean, scale),
        feature_names=tuple(f"f{i}" for i in range(n_features)),
        config_columns=space.bit_names,
    )


def random_problem(rng: np.random.Generator, min_support: int = 20, max_support: int = 500,
                   min_card: int = 24, max_card: int = 4096, max_constraints: int = 3,
                   n_features: int | None = None):
    from .cssp import build_problem

    space = random_space(rng, min_card, max_card, max_constraints)
    nf = int(rng.integers(1, 6)) if n_features is None else n_features
    model = random_model(rng, space, nf, int(rng.integers(min_support, max_support + 1)))
    query = model.scaler.mean[:nf] + model.scaler.scale[:nf] * rng.normal(size=nf)
    return build_problem(model, space, query)


# -- planted target -------------------------------------------------------------


@dataclass
class SyntheticTarget:
    """Planted performance ``p(f, c)`` plus deterministic per-run noise."""

    model: SvrModel
    space: ConfigurationSpace
    noise: float = 0.0
    seed: int = 0
    offset: float = 0.0

    def vector(self, features: Sequence[float], encoding: Sequence[int]) -> np.ndarray:
        return np.concatenate([np.asarray(features, dtype=float), np.asarray(encoding, dtype=float)])

    def true_performance(self, features, encodings) -> np.ndarray:
        enc = np.atleast_2d(np.asarray(encodings, dtype=float))
        f = np.broadcast_to(np.asarray(features, dtype=float), (enc.shape[0], len(features)))
        return np.asarray(self.model.predict(np.hstack([f, enc]))) + self.offset

    def _noise(self, instance_id: str, encoding, seed: int) -> float:
        if self.noise == 0.0:
            return 0.0
        key = f"{self.seed}|{instance_id}|{''.join(map(str, encoding))}|{seed}".encode()
        h = int.from_bytes(hashlib.sha256(key).digest()[:8], "little")
        return float(self.noise * np.random.default_rng(h).normal())

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "space": self.space.to_dict(),
                "noise": self.noise, "seed": self.seed, "offset": self.offset}

    @classmethod
    def from_dict(cls, d) -> "SyntheticTarget":
        return cls(SvrModel.from_dict(d["model"]), ConfigurationSpace.from_dict(d["space"]),
                   float(d["noise"]), int(d["seed"]), float(d.get("offset", 0.0)))


class SyntheticAdapter:
    """In-process adapter evaluating a :class:`SyntheticTarget`.

    Gaps are derived from performance against the instance optimum: the
    incumbent sits ``perf`` percent above it, the bound half that below.
    """

    def __init__(self, target: SyntheticTarget, feature_names: Sequence[str]):
        self.target = target
        self.feature_names = tuple(feature_names)

    def run(self, instance: InstanceFeatures, assignment, seed, time_limit_s) -> RunResult:
        cfg = self.target.space.encode(assignment)
        f = [float(instance.raw[n]) for n in self.feature_names]
        perf = float(self.target.true_performance(f, [cfg.encoding])[0])
        perf += self.target._noise(instance.instance_id, cfg.encoding, seed)
        inc = bnd = None
        if instance.optimum is not None:
            inc = instance.optimum * (1.0 + abs(perf) / 100.0)
            bnd = instance.optimum * (1.0 - abs(perf) / 200.0)
        return RunResult(perf, inc, bnd)


def planted_target(rng: np.random.Generator, space: ConfigurationSpace, n_features: int,
                   n_centers: int = 24, gamma: float = 0.25, noise: float = 0.0,
                   seed: int = 0, offset: float = 5.0) -> SyntheticTarget:
    k = space.encoding_length
    feats = rng.normal(size=(n_centers, n_features))
    idx = np.stack([rng.integers(s, size=n_centers) for s in space.sizes], axis=1)
    bits = space.encodings_of(idx).astype(float)
    w = rng.normal(size=n_centers)
    model = SvrModel(
        support_points=np.hstack([feats, bits]),
        dual_weights=w,
        bias=0.0,
        hyper=SvrHyper.of(1e9, 0.0, gamma),
        scaler=Standardizer.identity(n_features + k),
        feature_names=tuple(f"f{i}" for i in range(n_features)),
        config_columns=space.bit_names,
    )
    return SyntheticTarget(model, space, noise, seed, offset)


@dataclass
class Bundle:
    target: SyntheticTarget
    instances: list[InstanceFeatures]
    truth: pd.DataFrame  # instance_id, config (feasible index), encoding, perf

    def best_per_instance(self) -> pd.DataFrame:
        idx = self.truth.groupby("instance_id", sort=False)["perf"].idxmin()
        return self.truth.loc[idx].reset_index(drop=True)

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.target.space.save(d / "space.json")
        write_instances(d / "instances.csv", self.instances)
        (d / "target.json").write_text(json.dumps(self.target.to_dict()) + "\n")
        self.truth.to_csv(d / "truth.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def make_bundle(seed: int, n_instances: int, space: ConfigurationSpace, n_features: int = 4,
                noise: float = 0.0, n_centers: int = 24, gamma: float = 0.25) -> Bundle:
    rng = np.random.default_rng(seed)
    target = planted_target(rng, space, n_features, n_centers, gamma, noise, seed)
    names = target.model.feature_names
    instances = []
    for i in range(n_instances):
        f = rng.normal(size=n_features)
        instances.append(InstanceFeatures(
            f"inst{i:04d}", dict(zip(names, map(float, f))), optimum=float(100.0 + 10.0 * rng.random())
        ))
    rows_idx = space.feasible_indices()
    enc = space.encodings_of(rows_idx)
    encs = [",".join(map(str, e)) for e in enc]
    recs = []
    for inst in instances:
        f = [inst.raw[n] for n in names]
        perf = target.true_performance(f, enc)
        recs.append(pd.DataFrame({
            "instance_id": inst.instance_id,
            "config": np.arange(len(encs)),
            "encoding": encs,
            "perf": perf,
        }))
    return Bundle(target, instances, pd.concat(recs, ignore_index=True))
