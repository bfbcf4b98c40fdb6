"""Search for the configuration minimizing a trained performance map.

For a fixed query ``f`` and binary ``c`` the squared distance in the Gaussian
kernel splits into a feature part and a Hamming part::

    |(f_i, c_i) - (f, c)|^2 = |f_i - f|^2 + H(c_i, c)

so the objective becomes ``sum_i w_i * exp(-gamma * H(c_i, c)) + bias`` with
``w_i = beta_i * exp(-gamma * |f_i - f|^2)`` computed once per query. Terms
with equal ``c_i`` are merged. Because ``c`` is one-hot per parameter,
``H(c_i, c) = sum_b D[i, b, v_b]`` where ``D`` tabulates each block's
contribution for every value choice; all three solvers work off that table.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .configspace import FEAS_TOL, Configuration, ConfigurationSpace
from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    EmptySpace,
    InfeasibleConfig,
    NoFeasibleStart,
    SvrConfError,
)
from .svr import SvrModel, predict

DEFAULT_TIME_LIMIT = 60.0
DEFAULT_BUDGET = 10**6
START_TRIES = 1000

GLOBAL = "global_optimal"
LOCAL = "local"
TIME_LIMIT = "time_limit"


def _tie_tol(value: float) -> float:
    return 1e-12 * max(1.0, abs(value))


def _enc_key(row) -> tuple:
    # the encoding with the later 1-bit in the first differing block is the
    # lexicographically smaller one, i.e. the larger value index wins
    return tuple(-int(v) for v in row)


def _pick(rows: np.ndarray, vals: np.ndarray) -> int:
    """Index of the minimum, ties broken by smallest encoding."""
    best = float(vals.min())
    cand = np.flatnonzero(vals <= best + _tie_tol(best))
    return int(min(cand, key=lambda i: _enc_key(rows[i])))


@dataclass(frozen=True)
class CsspProblem:
    model: SvrModel
    space: ConfigurationSpace
    query_features: np.ndarray  # pipeline-transformed, unscaled
    bit_index: np.ndarray  # space bit used by each model config column
    weights: np.ndarray  # per support point, beta_i * exp(-gamma |f_i - f|^2)
    terms: np.ndarray  # merged weights, one per distinct support configuration
    term_configs: np.ndarray  # (u, n_config_columns) 0/1
    D: np.ndarray  # (u, P, Vmax) Hamming contribution table
    bias: float
    gamma: float
    stats: dict = field(default_factory=dict)

    @property
    def n_terms(self) -> int:
        return int(self.terms.shape[0])

    def hamming(self, rows) -> np.ndarray:
        return kernels.hamming_of_rows(self.D, rows)

    def objective_rows(self, rows) -> np.ndarray:
        return kernels.objective_rows(self.D, self.terms, self.gamma, self.bias, rows)

    def objective(self, config: Configuration) -> float:
        return objective(self, config)

    def full_vector(self, config: Configuration) -> np.ndarray:
        """Concatenated model input for ``config``."""
        enc = np.asarray(config.encoding, dtype=float)
        return np.concatenate([self.query_features, enc[self.bit_index]])


def _bit_index(model: SvrModel, space: ConfigurationSpace) -> np.ndarray:
    names = {n: i for i, n in enumerate(space.bit_names)}
    cols = model.config_columns
    if not cols:
        cols = space.bit_names
    missing = [c for c in cols if c not in names]
    if missing:
        raise DimensionMismatch(f"model configuration columns not in space: {missing}")
    return np.array([names[c] for c in cols], dtype=np.int64)


def build_problem(model: SvrModel, space: ConfigurationSpace, query_features) -> CsspProblem:
    f = np.asarray(query_features, dtype=float).ravel()
    bit_index = _bit_index(model, space)
    nf = model.dim - bit_index.shape[0]
    if nf < 0 or f.shape[0] != nf:
        raise DimensionMismatch(f"query has {f.shape[0]} features, model expects {max(nf, 0)}")
    mean, scale = model.scaler.mean, model.scaler.scale
    if np.any(mean[nf:] != 0.0) or np.any(scale[nf:] != 1.0):
        raise SvrConfError("configuration bits must not be rescaled by the model scaler")

    fs = (f - mean[:nf]) / scale[:nf]
    sup = model.support_points
    df = sup[:, :nf] - fs
    dist = (df * df).sum(axis=1)
    w = model.dual_weights * np.exp(-model.gamma * dist)
    cbits = np.rint(sup[:, nf:]).astype(np.int8)
    if cbits.shape[0] and not np.array_equal(cbits, sup[:, nf:]):
        raise SvrConfError("support configuration parts must be binary")

    if cbits.shape[0]:
        uniq, inv = np.unique(cbits, axis=0, return_inverse=True)
        terms = np.zeros(uniq.shape[0])
        np.add.at(terms, inv.ravel(), w)
    else:
        uniq = np.zeros((0, bit_index.shape[0]), dtype=np.int8)
        terms = np.zeros(0)

    P = space.n_parameters
    V = int(space.sizes.max())
    D = np.full((uniq.shape[0], P, V), 0.0)
    block_of_bit = np.repeat(np.arange(P), space.sizes)
    value_of_bit = np.concatenate([np.arange(s) for s in space.sizes])
    for col, sb in enumerate(bit_index):
        b, val = block_of_bit[sb], value_of_bit[sb]
        ci = uniq[:, col].astype(float)
        for v in range(space.sizes[b]):
            D[:, b, v] += np.abs(ci - (1.0 if v == val else 0.0))
    # padding entries are never indexed; make them loud if they are
    for b in range(P):
        D[:, b, space.sizes[b]:] = np.nan
    return CsspProblem(
        model=model,
        space=space,
        query_features=f,
        bit_index=bit_index,
        weights=w,
        terms=terms,
        term_configs=uniq,
        D=np.ascontiguousarray(D),
        bias=float(model.bias),
        gamma=float(model.gamma),
        stats={"n_support": int(sup.shape[0]), "n_terms": int(uniq.shape[0])},
    )


def objective(problem: CsspProblem, config: Configuration) -> float:
    if not problem.space.is_feasible(config):
        raise InfeasibleConfig(f"configuration {config.as_dict()} violates the space constraints")
    return float(problem.objective_rows(np.asarray([config.indices]))[0])


def direct_objective(problem: CsspProblem, config: Configuration) -> float:
    """Objective through the full model prediction; the reference path."""
    return float(predict(problem.model, problem.full_vector(config)))


@dataclass(frozen=True)
class CsspSolution:
    config: Configuration
    objective: float
    status: str
    nodes_or_moves: int
    elapsed_s: float
    solver: str = ""
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"{k}={v}" for k, v in self.config.assignment]
        lines += [
            f"# objective={self.objective!r}",
            f"# status={self.status}",
            f"# solver={self.solver}",
            f"# nodes_or_moves={self.nodes_or_moves}",
            f"# elapsed_s={self.elapsed_s:.6f}",
            f"# encoding={self.config.encoding_str()}",
        ]
        return "\n".join(lines) + "\n"


def _finish(problem, row, status, count, t0, solver, **extra) -> CsspSolution:
    cfg = problem.space.from_indices(row)
    obj = float(problem.objective_rows(np.asarray([cfg.indices]))[0])
    return CsspSolution(cfg, obj, status, int(count), time.perf_counter() - t0, solver, extra)


# -- exact enumeration -----------------------------------------------------


def solve_enumerate(problem: CsspProblem, budget: int = DEFAULT_BUDGET) -> CsspSolution:
    t0 = time.perf_counter()
    if problem.space.cardinality > budget:
        raise BudgetExceeded(
            f"space has {problem.space.cardinality} configurations, budget is {budget}"
        )
    rows = problem.space.feasible_indices()
    if rows.shape[0] == 0:
        raise EmptySpace("no feasible configuration")
    vals = problem.objective_rows(rows)
    best = _pick(rows, vals)
    return _finish(problem, rows[best], GLOBAL, rows.shape[0], t0, "enumerate")


# -- branch and bound --------------------------------------------------------


def _block_tables(problem: CsspProblem):
    D = problem.D
    sizes = problem.space.sizes
    P = D.shape[1]
    Dmin = np.zeros((D.shape[0], P))
    Dmax = np.zeros((D.shape[0], P))
    for b in range(P):
        Dmin[:, b] = D[:, b, : sizes[b]].min(axis=1) if D.shape[0] else 0.0
        Dmax[:, b] = D[:, b, : sizes[b]].max(axis=1) if D.shape[0] else 0.0
    return Dmin, Dmax


def branching_order(problem: CsspProblem) -> np.ndarray:
    """Blocks by decreasing influence sum_i |w_i| * range_i(b); stable on ties."""
    Dmin, Dmax = _block_tables(problem)
    infl = np.abs(problem.terms) @ (Dmax - Dmin) if problem.n_terms else np.zeros(problem.space.n_parameters)
    return np.array(sorted(range(len(infl)), key=lambda b: (-infl[b], b)), dtype=np.int64)


def node_lower_bound(problem: CsspProblem, fixed: Mapping[int, int]) -> float:
    """Lower bound on the objective over all completions of a partial assignment.

    ``fixed`` maps block (parameter position) to value index. Constraints are
    ignored, so the bound also holds for the constrained subtree.
    """
    Dmin, Dmax = _block_tables(problem)
    P = problem.space.n_parameters
    h = np.zeros(problem.n_terms)
    lo = np.zeros(problem.n_terms)
    hi = np.zeros(problem.n_terms)
    for b in range(P):
        if b in fixed:
            h += problem.D[:, b, fixed[b]]
        else:
            lo += Dmin[:, b]
            hi += Dmax[:, b]
    a = problem.terms
    ext = np.where(a > 0, hi, lo)
    return float((a * np.exp(-problem.gamma * (h + ext))).sum() + problem.bias)


class _Constraints:
    """Block-wise partial feasibility for linear constraints over indicator bits."""

    def __init__(self, space: ConfigurationSpace, order: np.ndarray):
        A, sense, rhs = space.constraint_matrix
        self.active = A.shape[0] > 0
        self.sense = sense
        self.rhs = rhs
        self.tol = FEAS_TOL * (1.0 + np.abs(rhs))
        R, P = A.shape[0], space.n_parameters
        V = int(space.sizes.max())
        self.coef = np.zeros((R, P, V))
        for b in range(P):
            off, s = space.offsets[b], space.sizes[b]
            self.coef[:, b, :s] = A[:, off : off + s]
        cmin = np.array([[self.coef[r, b, : space.sizes[b]].min() for b in range(P)] for r in range(R)]).reshape(R, P)
        cmax = np.array([[self.coef[r, b, : space.sizes[b]].max() for b in range(P)] for r in range(R)]).reshape(R, P)
        # suffix sums in branching order: free range after fixing depth d
        self.free_min = np.zeros((P + 1, R))
        self.free_max = np.zeros((P + 1, R))
        for d in range(P - 1, -1, -1):
            self.free_min[d] = self.free_min[d + 1] + cmin[:, order[d]]
            self.free_max[d] = self.free_max[d + 1] + cmax[:, order[d]]

    def child_ok(self, partial: np.ndarray, b: int, depth: int, nvals: int) -> np.ndarray:
        """Which values of block ``b`` (fixed at ``depth``) keep the node feasible."""
        if not self.active:
            return np.ones(nvals, dtype=bool)
        s = partial[:, None] + self.coef[:, b, :nvals]
        lo = s + self.free_min[depth + 1][:, None]
        hi = s + self.free_max[depth + 1][:, None]
        r = self.rhs[:, None]
        t = self.tol[:, None]
        sense = self.sense[:, None]
        ok_le = lo <= r + t
        ok_ge = hi >= r - t
        ok = np.where(sense < 0, ok_le, np.where(sense > 0, ok_ge, ok_le & ok_ge))
        return ok.all(axis=0)


def solve_bnb(problem: CsspProblem, time_limit_s: float = DEFAULT_TIME_LIMIT) -> CsspSolution:
    """Depth-first branch and bound over the one-hot blocks.

    Children are visited in order of increasing bound. A subtree is pruned
    when its bound exceeds the incumbent by more than the tie tolerance, so
    equal-valued configurations are still reached and the smallest encoding
    wins. The first feasible leaf is always reached before the clock is
    consulted.
    """
    t0 = time.perf_counter()
    space = problem.space
    P = space.n_parameters
    sizes = space.sizes
    order = branching_order(problem)
    Dmin, Dmax = _block_tables(problem)
    sufmin = np.zeros((P + 1, problem.n_terms))
    sufmax = np.zeros((P + 1, problem.n_terms))
    for d in range(P - 1, -1, -1):
        sufmin[d] = sufmin[d + 1] + Dmin[:, order[d]]
        sufmax[d] = sufmax[d + 1] + Dmax[:, order[d]]
    a = np.ascontiguousarray(problem.terms)
    pos = a > 0
    cons = _Constraints(space, order)
    D = problem.D
    gamma, bias = problem.gamma, problem.bias

    best_val = np.inf
    best_row: np.ndarray | None = None
    nodes = 0
    stopped = False
    row = np.zeros(P, dtype=np.int64)

    def better(val, cand):
        if best_row is None:
            return True
        tol = _tie_tol(best_val)
        if val < best_val - tol:
            return True
        return abs(val - best_val) <= tol and _enc_key(cand) < _enc_key(best_row)

    def dive(depth, hfix, partial):
        nonlocal best_val, best_row, nodes, stopped
        b = int(order[depth])
        nv = int(sizes[b])
        ext = np.where(pos, sufmax[depth + 1], sufmin[depth + 1])
        bounds = kernels.child_bounds(np.ascontiguousarray(D[:, b, :]), hfix, ext, a, gamma, bias, nv)
        nodes += 1
        ok = cons.child_ok(partial, b, depth, nv)
        # bound first, then larger value index (= smaller encoding)
        for v in sorted(range(nv), key=lambda v: (bounds[v], -v)):
            if stopped:
                return
            if not ok[v]:
                continue
            if best_row is not None and bounds[v] > best_val + _tie_tol(best_val):
                break
            row[b] = v
            if depth == P - 1:
                if better(bounds[v], row):
                    best_val = float(bounds[v])
                    best_row = row.copy()
                if time.perf_counter() - t0 > time_limit_s:
                    stopped = True
                    return
                continue
            if best_row is not None and time.perf_counter() - t0 > time_limit_s:
                stopped = True
                return
            part = partial + cons.coef[:, b, v] if cons.active else partial
            dive(depth + 1, hfix + D[:, b, v], part)

    dive(0, np.zeros(problem.n_terms), np.zeros(len(cons.rhs)))
    if best_row is None:
        raise EmptySpace("no feasible configuration")
    status = TIME_LIMIT if stopped else GLOBAL
    return _finish(problem, best_row, status, nodes, t0, "bnb")


# -- local search -------------------------------------------------------------


def _random_feasible(space: ConfigurationSpace, rng: np.random.Generator) -> np.ndarray | None:
    for _ in range(START_TRIES):
        row = np.array([rng.integers(s) for s in space.sizes], dtype=np.int64)
        if space.feasible_mask(row[None, :])[0]:
            return row
    return None


def solve_local(problem: CsspProblem, restarts: int = 5, seed: int = 0,
                time_limit_s: float = DEFAULT_TIME_LIMIT,
                certificate: float | None = None) -> CsspSolution:
    """Multi-start best-improvement descent over one-parameter changes.

    With ``certificate`` (a known global optimum value) the status is upgraded
    to global_optimal when the best point found matches it.
    """
    if restarts < 1:
        raise SvrConfError("restarts must be at least 1")
    t0 = time.perf_counter()
    space = problem.space
    rng = np.random.default_rng(seed)
    a = np.ascontiguousarray(problem.terms)
    constrained = bool(space.constraints)
    best_row = None
    best_val = np.inf
    moves = 0
    starts = 0
    for _ in range(restarts):
        if best_row is not None and time.perf_counter() - t0 > time_limit_s:
            break
        cur = _random_feasible(space, rng)
        if cur is None:
            continue
        starts += 1
        hcur = problem.hamming(cur)[:, 0]
        val = float(problem.objective_rows(cur)[0])
        while time.perf_counter() - t0 <= time_limit_s:
            nb = kernels.neighbor_objectives(problem.D, a, problem.gamma, problem.bias, cur, hcur, space.sizes)
            if constrained:
                bs, vs = np.nonzero(np.isfinite(nb))
                cand = np.repeat(cur[None, :], bs.size, axis=0)
                cand[np.arange(bs.size), bs] = vs
                bad = ~space.feasible_mask(cand)
                nb[bs[bad], vs[bad]] = np.inf
            m = float(nb.min())
            if not m < val - _tie_tol(val):
                break
            bs, vs = np.nonzero(nb <= m + _tie_tol(m))
            cands = []
            for b, v in zip(bs, vs):
                r = cur.copy()
                r[b] = v
                cands.append((_enc_key(r), int(b), int(v)))
            _, b, v = min(cands)
            hcur = hcur - problem.D[:, b, cur[b]] + problem.D[:, b, v]
            cur = cur.copy()
            cur[b] = v
            val = float(nb[b, v])
            moves += 1
        if best_row is None or val < best_val - _tie_tol(best_val) or (
            abs(val - best_val) <= _tie_tol(best_val) and _enc_key(cur) < _enc_key(best_row)
        ):
            best_row, best_val = cur.copy(), val
    if best_row is None:
        raise NoFeasibleStart(f"no feasible start found in {restarts} restarts")
    sol = _finish(problem, best_row, LOCAL, moves, t0, "local", starts=starts)
    if certificate is not None and abs(sol.objective - certificate) <= 1e-9 * max(1.0, abs(certificate)):
        sol = CsspSolution(sol.config, sol.objective, GLOBAL, sol.nodes_or_moves, sol.elapsed_s, "local", sol.extra)
    return sol


SOLVERS = ("enumerate", "bnb", "local")


def solve(problem: CsspProblem, solver: str = "bnb", time_limit_s: float = DEFAULT_TIME_LIMIT,
          seed: int = 0, restarts: int = 5, budget: int = DEFAULT_BUDGET) -> CsspSolution:
    if solver == "enumerate":
        return solve_enumerate(problem, budget)
    if solver == "bnb":
        return solve_bnb(problem, time_limit_s)
    if solver == "local":
        return solve_local(problem, restarts, seed, time_limit_s)
    raise SvrConfError(f"unknown solver {solver!r}")
