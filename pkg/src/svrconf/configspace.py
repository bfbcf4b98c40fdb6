"""Categorical configuration spaces with one-hot encodings and linear constraints.

A space is an ordered list of categorical parameters. A configuration is
encoded as the concatenation of one incidence block per parameter, in
declaration order. Extra compatibility rules are linear constraints over the
``(parameter, value)`` indicator bits.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    BadLength,
    MissingParameter,
    NotOneHot,
    SpaceError,
    UnknownParameter,
    UnknownValue,
)

_RELATIONS = {"<=": "<=", "≤": "<=", "=": "=", "==": "=", ">=": ">=", "≥": ">="}
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Parameter:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(str(v) for v in self.values))
        if len(self.values) < 2:
            raise SpaceError(f"parameter {self.name!r} needs at least 2 values")
        if len(set(self.values)) != len(self.values):
            raise SpaceError(f"parameter {self.name!r} has duplicate value labels")


@dataclass(frozen=True)
class LinearConstraint:
    """``sum(coef * x[param, value]) <relation> rhs`` over indicator bits."""

    terms: tuple[tuple[str, str, float], ...]
    relation: str
    rhs: float

    def __post_init__(self):
        rel = _RELATIONS.get(self.relation)
        if rel is None:
            raise SpaceError(f"unknown relation {self.relation!r}")
        object.__setattr__(self, "relation", rel)
        object.__setattr__(
            self, "terms", tuple((str(p), str(v), float(c)) for p, v, c in self.terms)
        )
        object.__setattr__(self, "rhs", float(self.rhs))

    @property
    def coefficients(self) -> dict[tuple[str, str], float]:
        out: dict[tuple[str, str], float] = {}
        for p, v, c in self.terms:
            out[(p, v)] = out.get((p, v), 0.0) + c
        return out


@dataclass(frozen=True)
class Configuration:
    assignment: tuple[tuple[str, str], ...]
    indices: tuple[int, ...]
    encoding: tuple[int, ...]

    def as_dict(self) -> dict[str, str]:
        return dict(self.assignment)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.encoding, dtype=np.int8)

    def encoding_str(self) -> str:
        return ",".join(str(b) for b in self.encoding)


@dataclass(frozen=True)
class ConfigurationSpace:
    parameters: tuple[Parameter, ...]
    constraints: tuple[LinearConstraint, ...] = ()
    default: tuple[tuple[str, str], ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise SpaceError("parameter names must be unique")
        if not self.parameters:
            raise SpaceError("a configuration space needs at least one parameter")
        for con in self.constraints:
            for p, v, _ in con.terms:
                self._check_value(p, v)
        if self.default is not None:
            dflt = dict(self.default)
            object.__setattr__(self, "default", tuple(dflt.items()))
            self.encode(dflt)

    # -- layout -------------------------------------------------------------

    @cached_property
    def _index(self) -> dict[str, int]:
        return {p.name: i for i, p in enumerate(self.parameters)}

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([len(p.values) for p in self.parameters], dtype=np.int64)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)

    @property
    def encoding_length(self) -> int:
        return int(self.sizes.sum())

    @property
    def n_parameters(self) -> int:
        return len(self.parameters)

    @property
    def cardinality(self) -> int:
        """Size of the unconstrained Cartesian product."""
        return int(np.prod([len(p.values) for p in self.parameters], dtype=object))

    @cached_property
    def bit_names(self) -> tuple[str, ...]:
        return tuple(f"{p.name}={v}" for p in self.parameters for v in p.values)

    def bit_index(self, param: str, value: str) -> int:
        i = self._check_value(param, value)
        return int(self.offsets[self._index[param]]) + i

    def _check_value(self, param: str, value: str) -> int:
        if param not in self._index:
            raise UnknownParameter(f"unknown parameter {param!r}")
        values = self.parameters[self._index[param]].values
        try:
            return values.index(str(value))
        except ValueError:
            raise UnknownValue(f"{value!r} is not a value of {param!r}") from None

    @cached_property
    def constraint_matrix(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(A, sense, rhs) with sense -1 for <=, 0 for =, +1 for >=."""
        k = self.encoding_length
        A = np.zeros((len(self.constraints), k))
        sense = np.zeros(len(self.constraints), dtype=np.int64)
        rhs = np.zeros(len(self.constraints))
        for r, con in enumerate(self.constraints):
            for (p, v), c in con.coefficients.items():
                A[r, self.bit_index(p, v)] += c
            sense[r] = {"<=": -1, "=": 0, ">=": 1}[con.relation]
            rhs[r] = con.rhs
        return A, sense, rhs

    # -- encode / decode ----------------------------------------------------

    def encode(self, assignment: Mapping[str, str]) -> Configuration:
        for name in assignment:
            if name not in self._index:
                raise UnknownParameter(f"unknown parameter {name!r}")
        idx = []
        for p in self.parameters:
            if p.name not in assignment:
                raise MissingParameter(f"assignment lacks parameter {p.name!r}")
            idx.append(self._check_value(p.name, assignment[p.name]))
        return self.from_indices(idx)

    def from_indices(self, indices: Sequence[int]) -> Configuration:
        indices = tuple(int(i) for i in indices)
        enc = [0] * self.encoding_length
        for off, i in zip(self.offsets, indices):
            enc[int(off) + i] = 1
        assignment = tuple(
            (p.name, p.values[i]) for p, i in zip(self.parameters, indices)
        )
        return Configuration(assignment, indices, tuple(enc))

    def decode(self, encoding: Sequence[int]) -> dict[str, str]:
        return self.configuration_from_encoding(encoding).as_dict()

    def configuration_from_encoding(self, encoding: Sequence[int]) -> Configuration:
        enc = np.asarray(encoding)
        if enc.ndim != 1 or enc.shape[0] != self.encoding_length:
            raise BadLength(
                f"encoding has length {enc.size}, expected {self.encoding_length}"
            )
        if not np.all((enc == 0) | (enc == 1)):
            raise NotOneHot("encoding must be binary")
        idx = []
        for p, off, size in zip(self.parameters, self.offsets, self.sizes):
            block = enc[off : off + size]
            if block.sum() != 1:
                raise NotOneHot(f"block {p.name!r} does not have exactly one bit set")
            idx.append(int(np.argmax(block)))
        return self.from_indices(idx)

    # -- feasibility / enumeration -----------------------------------------

    def is_feasible(self, config: Configuration) -> bool:
        if not self.constraints:
            return True
        return bool(self.feasible_mask(np.asarray([config.indices]))[0])

    def feasible_mask(self, index_rows: np.ndarray) -> np.ndarray:
        """Vectorized constraint check over rows of value indices."""
        index_rows = np.asarray(index_rows, dtype=np.int64)
        n = index_rows.shape[0]
        if not self.constraints:
            return np.ones(n, dtype=bool)
        A, sense, rhs = self.constraint_matrix
        lhs = A[:, (index_rows + self.offsets).ravel()].reshape(len(rhs), n, -1).sum(axis=2)
        tol = FEAS_TOL * (1.0 + np.abs(rhs))[:, None]
        r = rhs[:, None]
        ok = np.where(
            sense[:, None] < 0,
            lhs <= r + tol,
            np.where(sense[:, None] > 0, lhs >= r - tol, np.abs(lhs - r) <= tol),
        )
        return ok.all(axis=0)

    def feasible_indices(self, chunk: int = 65536) -> np.ndarray:
        """All feasible configurations as value-index rows, lexicographic order."""
        ranges = [range(len(p.values)) for p in self.parameters]
        out = []
        it = itertools.product(*ranges)
        while True:
            block = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
            if block.size == 0:
                break
            out.append(block[self.feasible_mask(block)])
        if not out:
            return np.zeros((0, self.n_parameters), dtype=np.int64)
        return np.concatenate(out)

    def encodings_of(self, index_rows: np.ndarray) -> np.ndarray:
        index_rows = np.asarray(index_rows, dtype=np.int64)
        enc = np.zeros((index_rows.shape[0], self.encoding_length), dtype=np.int8)
        cols = index_rows + self.offsets
        enc[np.arange(index_rows.shape[0])[:, None], cols] = 1
        return enc

    def enumerate(self) -> Iterator[Configuration]:
        for ranges in itertools.product(*(range(len(p.values)) for p in self.parameters)):
            cfg = self.from_indices(ranges)
            if self.is_feasible(cfg):
                yield cfg

    def default_configuration(self) -> Configuration | None:
        return None if self.default is None else self.encode(dict(self.default))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "parameters": [{"name": p.name, "values": list(p.values)} for p in self.parameters],
            "constraints": [
                {
                    "terms": [{"param": p, "value": v, "coef": c} for p, v, c in con.terms],
                    "relation": con.relation,
                    "rhs": con.rhs,
                }
                for con in self.constraints
            ],
        }
        if self.default is not None:
            out["default"] = dict(self.default)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConfigurationSpace":
        try:
            params = tuple(Parameter(d["name"], tuple(d["values"])) for d in data["parameters"])
            cons = tuple(
                LinearConstraint(
                    tuple((t["param"], t["value"], t.get("coef", 1.0)) for t in c["terms"]),
                    c["relation"],
                    c["rhs"],
                )
                for c in data.get("constraints", ())
            )
        except (KeyError, TypeError) as exc:
            raise SpaceError(f"malformed space definition: {exc}") from exc
        default = data.get("default")
        return cls(params, cons, tuple(default.items()) if default else None)

    @classmethod
    def load(cls, path: str | Path) -> "ConfigurationSpace":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def encode(space: ConfigurationSpace, assignment: Mapping[str, str]) -> Configuration:
    return space.encode(assignment)


def decode(space: ConfigurationSpace, encoding: Sequence[int]) -> dict[str, str]:
    return space.decode(encoding)


def is_feasible(space: ConfigurationSpace, config: Configuration) -> bool:
    return space.is_feasible(config)


def enumerate_configurations(space: ConfigurationSpace) -> Iterator[Configuration]:
    return space.enumerate()


def with_constraint(space: ConfigurationSpace, con: LinearConstraint) -> ConfigurationSpace:
    return ConfigurationSpace(space.parameters, space.constraints + (con,), space.default)
