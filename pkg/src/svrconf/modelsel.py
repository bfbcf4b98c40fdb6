"""Hyperparameter search inside nested, instance-grouped cross-validation."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .dataset import Dataset
from .errors import DataError, TooFewInstances
from .features import Standardizer
from .svr import ConvergenceWarning, SvrHyper, SvrModel, metric_fn, predict, train

log = logging.getLogger(__name__)

FOLD_REPORT_COLUMNS = ("phase", "fold", "draw", "C", "gamma", "epsilon", "score")


@dataclass(frozen=True)
class SearchSpace:
    c_lo: float = 1e-2
    c_hi: float = 1e3
    g_lo: float | None = None  # None: 1e-4 / dim
    g_hi: float | None = None  # None: 1e2 / dim
    e_lo: float = 1e-4
    e_hi: float = 1e-1

    def __post_init__(self):
        for lo, hi, nm in ((self.c_lo, self.c_hi, "C"), (self.e_lo, self.e_hi, "epsilon")):
            if not 0 <= lo < hi:
                raise DataError(f"bad {nm} range [{lo}, {hi}]")
        if self.c_lo <= 0:
            raise DataError("C range must be positive")
        if self.g_lo is not None and self.g_hi is not None and not 0 < self.g_lo < self.g_hi:
            raise DataError("bad gamma range")

    def gamma_range(self, dim: int) -> tuple[float, float]:
        lo = self.g_lo if self.g_lo is not None else 1e-4 / dim
        hi = self.g_hi if self.g_hi is not None else 1e2 / dim
        return lo, hi

    def sample(self, rng: np.random.Generator, dim: int) -> SvrHyper:
        # fixed draw order keeps draw k identical whatever the total count
        u = rng.random(3)
        glo, ghi = self.gamma_range(dim)
        C = math.exp(math.log(self.c_lo) + u[0] * (math.log(self.c_hi) - math.log(self.c_lo)))
        g = math.exp(math.log(glo) + u[1] * (math.log(ghi) - math.log(glo)))
        e = self.e_lo + u[2] * (self.e_hi - self.e_lo)
        return SvrHyper.of(C, e, g)

    def draws(self, n: int, seed: int, dim: int) -> list[SvrHyper]:
        rng = np.random.default_rng(seed)
        return [self.sample(rng, dim) for _ in range(n)]


@dataclass(frozen=True)
class CvPlan:
    outer_folds: int = 5
    inner_folds: int = 3
    draws: int = 20
    metric: str = "mae"
    seed: int = 0
    tol: float = 1e-3
    max_passes: int | None = None
    standardize: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise DataError("fold counts must be at least 2")
        if self.draws < 1:
            raise DataError("draws must be at least 1")
        metric_fn(self.metric)


def instance_folds(instance_ids: Sequence[str], k: int, seed: int) -> list[list[str]]:
    """Partition instances into ``k`` folds after a seeded shuffle."""
    ids = sorted(set(map(str, instance_ids)))
    if len(ids) < k:
        raise TooFewInstances(f"{len(ids)} instances cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(len(ids))
    return [[ids[i] for i in part] for part in np.array_split(perm, k)]


def _split_xy(ds: Dataset):
    return ds.design_matrix(), ds.labels()


def _scaler(ds: Dataset, X: np.ndarray, standardize: bool) -> Standardizer:
    nf = len(ds.feature_names)
    if not standardize:
        return Standardizer.identity(X.shape[1])
    active = [True] * nf + [False] * (X.shape[1] - nf)
    return Standardizer.fit(X, active)


def _fit(ds: Dataset, hyper: SvrHyper, plan: CvPlan) -> SvrModel:
    X, y = _split_xy(ds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return train(X, y, hyper, tol=plan.tol, max_passes=plan.max_passes,
                     scaler=_scaler(ds, X, plan.standardize),
                     feature_names=ds.feature_names, config_columns=ds.config_columns)


def _score(model: SvrModel, ds: Dataset, metric: str) -> float:
    X, y = _split_xy(ds)
    return metric_fn(metric)(predict(model, X), y)


def _cv_score(ds: Dataset, hyper: SvrHyper, folds: list[list[str]], plan: CvPlan) -> float:
    scores = []
    for test_ids in folds:
        test = ds.rows_of(test_ids)
        tr = ds.subset(~ds.frame["instance_id"].isin(set(test_ids)).to_numpy())
        scores.append(_score(_fit(tr, hyper, plan), test, plan.metric))
    return float(np.mean(scores))


def _map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def search_scores(train_rows: Dataset, space: SearchSpace, inner_folds: int, draws: int,
                  metric: str, seed: int, plan: CvPlan | None = None) -> list[tuple[SvrHyper, float]]:
    plan = plan or CvPlan(inner_folds=inner_folds, draws=draws, metric=metric, seed=seed)
    plan = CvPlan(**{**asdict(plan), "inner_folds": inner_folds, "draws": draws, "metric": metric, "seed": seed})
    dim = len(train_rows.feature_names) + len(train_rows.config_columns)
    hypers = space.draws(draws, seed, dim)
    folds = instance_folds(train_rows.instances, inner_folds, seed + 1)
    scores = _map(lambda h: _cv_score(train_rows, h, folds, plan), hypers, plan.jobs)
    return list(zip(hypers, scores))


def _argmin(scored) -> int:
    # earliest draw wins ties
    best = 0
    for i, (_, s) in enumerate(scored):
        if s < scored[best][1]:
            best = i
    return best


def random_search(train_rows: Dataset, space: SearchSpace, inner_folds: int, draws: int,
                  metric: str, seed: int, plan: CvPlan | None = None) -> SvrHyper:
    scored = search_scores(train_rows, space, inner_folds, draws, metric, seed, plan)
    return scored[_argmin(scored)][0]


def nested_cv(ds: Dataset, space: SearchSpace, plan: CvPlan) -> tuple[float, pd.DataFrame]:
    """Outer-fold error estimate with an inner random search per outer fold."""
    outer = instance_folds(ds.instances, plan.outer_folds, plan.seed)
    rows = []
    outer_scores = []
    for f, test_ids in enumerate(outer):
        test = ds.rows_of(test_ids)
        tr = ds.subset(~ds.frame["instance_id"].isin(set(test_ids)).to_numpy())
        inner_seed = plan.seed * 1000 + f + 1
        scored = search_scores(tr, space, plan.inner_folds, plan.draws, plan.metric, inner_seed, plan)
        for d, (h, s) in enumerate(scored):
            rows.append(("inner", f, d, h.C, h.gamma, h.epsilon, s))
        w = _argmin(scored)
        hyper = scored[w][0]
        score = _score(_fit(tr, hyper, plan), test, plan.metric)
        outer_scores.append(score)
        rows.append(("outer", f, w, hyper.C, hyper.gamma, hyper.epsilon, score))
        log.info("outer fold %d: winner draw %d, %s = %.6g", f, w, plan.metric, score)
    report = pd.DataFrame(rows, columns=list(FOLD_REPORT_COLUMNS))
    return float(np.mean(outer_scores)), report


def in_sample(ds: Dataset) -> Dataset:
    tags = set(ds.frame["split"])
    if tags <= {""}:
        return ds
    return ds.split_rows("IS")


def fit_final(ds: Dataset, hyper: SvrHyper, plan: CvPlan | None = None, path=None) -> SvrModel:
    plan = plan or CvPlan()
    is_rows = in_sample(ds)
    if len(is_rows) == 0:
        raise DataError("no in-sample rows to train on")
    X, y = _split_xy(is_rows)
    model = train(X, y, hyper, tol=plan.tol, max_passes=plan.max_passes,
                  scaler=_scaler(is_rows, X, plan.standardize),
                  feature_names=is_rows.feature_names, config_columns=is_rows.config_columns)
    if path is not None:
        model.save(path)
    return model
