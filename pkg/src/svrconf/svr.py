"""Epsilon-insensitive support vector regression with a Gaussian kernel.

Training solves the dual QP with SMO (maximal violating pair selection).
A model keeps only the points with nonzero dual weight; prediction is the
kernel expansion ``sum_i beta_i * exp(-gamma * |x_i - x|^2) + bias`` on
standardized inputs.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import BadDelta, DimensionMismatch, LengthMismatch, NoConvergence, SvrConfError
from .features import Standardizer

DEFAULT_TOL = 1e-3
DEFAULT_CACHE_MB = 512.0


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KernelSpec:
    gamma: float
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise SvrConfError(f"unsupported kernel {self.kind!r}")
        if not self.gamma > 0:
            raise SvrConfError("gamma must be positive")


@dataclass(frozen=True)
class SvrHyper:
    C: float
    epsilon: float
    kernel: KernelSpec

    def __post_init__(self):
        if not self.C > 0:
            raise SvrConfError("C must be positive")
        if not self.epsilon >= 0:
            raise SvrConfError("epsilon must be non-negative")

    @classmethod
    def of(cls, C: float, epsilon: float, gamma: float) -> "SvrHyper":
        return cls(float(C), float(epsilon), KernelSpec(float(gamma)))

    @property
    def gamma(self) -> float:
        return self.kernel.gamma


@dataclass
class SvrModel:
    support_points: np.ndarray  # (m, d), already standardized
    dual_weights: np.ndarray  # (m,) beta = alpha - alpha*
    bias: float
    hyper: SvrHyper
    scaler: Standardizer
    feature_names: tuple[str, ...] = ()
    config_columns: tuple[str, ...] = ()
    converged: bool = True
    n_iter: int = 0
    dual_objective: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.scaler.mean.shape[0])

    @property
    def gamma(self) -> float:
        return self.hyper.kernel.gamma

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, X) -> np.ndarray | float:
        return predict(self, X)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kernel": self.hyper.kernel.kind,
            "gamma": self.hyper.gamma,
            "C": self.hyper.C,
            "epsilon": self.hyper.epsilon,
            "bias": self.bias,
            "scaler": self.scaler.to_dict(),
            "feature_names": list(self.feature_names),
            "config_columns": list(self.config_columns),
            "support_points": self.support_points.tolist(),
            "dual_weights": self.dual_weights.tolist(),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "dual_objective": self.dual_objective,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d) -> "SvrModel":
        scaler = Standardizer.from_dict(d["scaler"])
        pts = np.asarray(d["support_points"], dtype=float).reshape(-1, scaler.mean.shape[0])
        return cls(
            support_points=pts,
            dual_weights=np.asarray(d["dual_weights"], dtype=float),
            bias=float(d["bias"]),
            hyper=SvrHyper(float(d["C"]), float(d["epsilon"]), KernelSpec(float(d["gamma"]), d.get("kernel", "gaussian"))),
            scaler=scaler,
            feature_names=tuple(d.get("feature_names", ())),
            config_columns=tuple(d.get("config_columns", ())),
            converged=bool(d.get("converged", True)),
            n_iter=int(d.get("n_iter", 0)),
            dual_objective=float(d.get("dual_objective", float("nan"))),
            meta=dict(d.get("meta", {})),
        )

    def save(self, path: str | Path) -> None:
        # json writes floats with repr(), which round-trips every double exactly
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, allow_nan=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "SvrModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes {x.shape} and {y.shape} differ")
    d = x - y
    return math.exp(-spec.gamma * float(d @ d))


def sq_dists(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(d, 0.0)


def gram(X: np.ndarray, Y: np.ndarray | None, gamma: float) -> np.ndarray:
    sym = Y is None
    K = np.exp(-gamma * sq_dists(X, X if sym else Y))
    if sym:
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
    return K


class KernelRowCache:
    """LRU cache of Gram rows for training sets whose full matrix does not fit."""

    def __init__(self, X: np.ndarray, gamma: float, max_bytes: float):
        self.X = X
        self.gamma = gamma
        self.sq = (X * X).sum(1)
        self.max_rows = max(2, int(max_bytes // (8 * X.shape[0])))
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __call__(self, i: int) -> np.ndarray:
        row = self._rows.get(i)
        if row is not None:
            self._rows.move_to_end(i)
            self.hits += 1
            return row
        self.misses += 1
        d = np.maximum(self.sq + self.sq[i] - 2.0 * (self.X @ self.X[i]), 0.0)
        row = np.exp(-self.gamma * d)
        row[i] = 1.0
        self._rows[i] = row
        if len(self._rows) > self.max_rows:
            self._rows.popitem(last=False)
        return row


def dual_objective(K: np.ndarray, y, beta, epsilon: float) -> float:
    """Minimization-form dual: 0.5 b'Kb - y'b + eps * |b|_1."""
    beta = np.asarray(beta, dtype=float)
    return float(0.5 * beta @ K @ beta - np.asarray(y, dtype=float) @ beta + epsilon * np.abs(beta).sum())


def _bias_from_gradient(a, G, C):
    n = a.shape[0] // 2
    z = np.concatenate([np.ones(n), -np.ones(n)])
    v = -z * G
    free = (a > 0.0) & (a < C)
    if free.any():
        return float(v[free].mean())
    pos = z > 0
    up = np.where(pos, a < C, a > 0.0)
    low = np.where(pos, a > 0.0, a < C)
    hi = v[up].max() if up.any() else None
    lo = v[low].min() if low.any() else None
    if hi is None:
        return float(lo)
    if lo is None:
        return float(hi)
    return float(0.5 * (hi + lo))


def train(points, labels, hyper: SvrHyper, tol: float = DEFAULT_TOL,
          max_passes: int | None = None, scaler: Standardizer | None = None,
          feature_names: Sequence[str] = (), config_columns: Sequence[str] = (),
          cache_mb: float = DEFAULT_CACHE_MB, keep_all: bool = False) -> SvrModel:
    """Fit an epsilon-SVR by SMO.

    ``max_passes`` counts sweeps of ``len(points)`` pair updates each and
    defaults to ``10 * len(points)``. If the budget runs out the best-so-far
    model is returned with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    X = np.asarray(points, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise LengthMismatch("points and labels must have matching lengths")
    if X.shape[0] < 2:
        raise SvrConfError("need at least two training points")
    if not np.all(np.isfinite(y)):
        raise SvrConfError("labels must be finite")
    n = X.shape[0]
    scaler = scaler or Standardizer.identity(X.shape[1])
    Xs = scaler.transform(X)
    if max_passes is None:
        max_passes = 10 * n
    max_iter = int(max_passes) * n
    C, eps, g = hyper.C, hyper.epsilon, hyper.gamma

    if 8.0 * n * n <= cache_mb * 2**20:
        K = gram(Xs, None, g)
        a, G, it, conv = kernels.smo_full(K, y, eps, C, tol, max_iter)
    else:
        K = None
        cache = KernelRowCache(Xs, g, cache_mb * 2**20)
        a, G, it, conv = kernels.smo_rows(cache, np.ones(n), y, eps, C, tol, max_iter)

    beta = a[:n] - a[n:]
    bias = _bias_from_gradient(a, G, C)
    # f = 0.5 a'Qa + p'a = 0.5 a'(G + p)
    p = np.concatenate([eps - y, eps + y])
    dobj = float(0.5 * a @ (G + p))
    if not conv:
        warnings.warn(
            f"SMO stopped after {it} iterations without reaching tol={tol}",
            ConvergenceWarning,
            stacklevel=2,
        )
    keep = np.ones(n, dtype=bool) if keep_all else beta != 0.0
    return SvrModel(
        support_points=Xs[keep],
        dual_weights=beta[keep],
        bias=bias,
        hyper=hyper,
        scaler=scaler,
        feature_names=tuple(feature_names),
        config_columns=tuple(config_columns),
        converged=conv,
        n_iter=it,
        dual_objective=dobj,
        meta={"n_train": n, "tol": tol},
    )


def train_strict(*args, **kwargs) -> SvrModel:
    """Like :func:`train` but raises :class:`NoConvergence` instead of warning."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = train(*args, **kwargs)
    if not model.converged:
        raise NoConvergence(f"SMO did not converge in {model.n_iter} iterations")
    return model


def decision_values(model: SvrModel, Xs: np.ndarray) -> np.ndarray:
    """Kernel expansion on already-standardized inputs."""
    if model.support_points.shape[0] == 0:
        return np.full(Xs.shape[0], model.bias)
    K = np.exp(-model.gamma * sq_dists(Xs, model.support_points))
    return K @ model.dual_weights + model.bias


def predict(model: SvrModel, X) -> np.ndarray | float:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.shape[1] != model.dim:
        raise DimensionMismatch(f"input has dimension {X2.shape[1]}, model expects {model.dim}")
    out = decision_values(model, model.scaler.transform(X2))
    return float(out[0]) if single else out


def predict_exact(model: SvrModel, x) -> float:
    """Term-by-term evaluation of one point; slow, used as a reference."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise DimensionMismatch(f"input has shape {x.shape}, model expects ({model.dim},)")
    xs = model.scaler.transform(x)
    spec = model.hyper.kernel
    return math.fsum(
        b * kernel_eval(spec, p, xs) for b, p in zip(model.dual_weights, model.support_points)
    ) + model.bias


def kkt_report(model: SvrModel, X, y, beta_full: np.ndarray | None = None, tol: float = DEFAULT_TOL) -> dict:
    """Check the epsilon-SVR optimality conditions on the training set.

    ``beta_full`` gives the weight of every training point (zeros included);
    when omitted the model must have been trained with ``keep_all=True``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = model.dual_weights if beta_full is None else np.asarray(beta_full, dtype=float)
    if beta.shape[0] != y.shape[0]:
        raise LengthMismatch("need one dual weight per training point")
    C, eps = model.hyper.C, model.hyper.epsilon
    r = np.abs(np.asarray(predict(model, X)) - y)
    ab = np.abs(beta)
    at_zero = ab == 0.0
    at_c = ab >= C
    free = ~at_zero & ~at_c
    viol = {
        "sum_beta": abs(float(beta.sum())),
        "box": float(max(0.0, (ab - C).max())),
        "free": float(np.abs(r[free] - eps).max()) if free.any() else 0.0,
        "zero": float(max(0.0, (r[at_zero] - eps).max())) if at_zero.any() else 0.0,
        "bound": float(max(0.0, (eps - r[at_c]).max())) if at_c.any() else 0.0,
    }
    viol["ok"] = viol["free"] <= tol and viol["zero"] <= tol and viol["bound"] <= tol
    return viol


# -- error metrics ------------------------------------------------------------


def _pair(preds, labels):
    p = np.asarray(preds, dtype=float).ravel()
    q = np.asarray(labels, dtype=float).ravel()
    if p.shape != q.shape:
        raise LengthMismatch(f"{p.size} predictions vs {q.size} labels")
    if p.size == 0:
        raise LengthMismatch("empty input")
    return p, q


def mae(preds, labels) -> float:
    """Sum (not mean) of absolute errors."""
    p, q = _pair(preds, labels)
    return float(np.abs(q - p).sum())


def mean_mae(preds, labels) -> float:
    p, q = _pair(preds, labels)
    return float(np.abs(q - p).mean())


def loss_delta(label: float, pred: float, delta: float) -> float:
    """Per-point asymmetric loss; the first matching case wins."""
    p, pb = label, pred
    if p <= delta and pb > p:
        return (pb - p) * (1.0 + 1.0 / (1.0 + math.exp(p - pb)))
    if p >= 1.0 - delta and pb < p:
        return (p - pb) * (1.0 + 1.0 / (1.0 + math.exp(pb - p)))
    if delta <= p <= 1.0 - delta:
        return p - pb
    return 0.0


def _cmae_terms(preds, labels, delta):
    if not 0.0 < delta <= 0.5:
        raise BadDelta(f"delta must lie in (0, 0.5], got {delta}")
    pb, p = _pair(preds, labels)
    c1 = (p <= delta) & (pb > p)
    c2 = ~c1 & (p >= 1.0 - delta) & (pb < p)
    c3 = ~c1 & ~c2 & (p >= delta) & (p <= 1.0 - delta)
    out = np.zeros_like(p)
    d1 = pb[c1] - p[c1]
    out[c1] = d1 * (1.0 + 1.0 / (1.0 + np.exp(-d1)))
    d2 = p[c2] - pb[c2]
    out[c2] = d2 * (1.0 + 1.0 / (1.0 + np.exp(-d2)))
    out[c3] = p[c3] - pb[c3]
    return out, c3


def cmae(preds, labels, delta: float) -> float:
    """Asymmetric error sum. The middle band is signed: over-predictions there
    contribute negatively."""
    terms, _ = _cmae_terms(preds, labels, delta)
    return float(terms.sum())


def cmae_abs(preds, labels, delta: float) -> float:
    """Variant of :func:`cmae` with an absolute middle band. Not the published metric."""
    terms, mid = _cmae_terms(preds, labels, delta)
    terms[mid] = np.abs(terms[mid])
    return float(terms.sum())


METRICS = {
    "mae": mae,
    "cmae02": lambda p, q: cmae(p, q, 0.2),
    "cmae03": lambda p, q: cmae(p, q, 0.3),
    "cmae04": lambda p, q: cmae(p, q, 0.4),
}


def metric_fn(name: str):
    key = name.lower().replace("_", "").replace(".", "")
    aliases = {"cmae2": "cmae02", "cmae3": "cmae03", "cmae4": "cmae04"}
    key = aliases.get(key, key)
    if key not in METRICS:
        raise SvrConfError(f"unknown metric {name!r}")
    return METRICS[key]
