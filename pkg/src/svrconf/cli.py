"""Command-line front end.

All commands read one JSON run-configuration file (``--config``); flags given
on the command line override the matching config entries. Relative paths in
the config are resolved against the config file's directory.

Exit codes: 0 success, 2 usage, 3 data error, 4 solver non-convergence,
5 adapter failures during collection.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import cssp, dataset as dsm, evaluate, features, modelsel, synth
from .adapters import SubprocessAdapter
from .configspace import ConfigurationSpace
from .errors import AllAboveThreshold, DataError, EmptySpace, SvrConfError, UnknownColumn
from .svr import ConvergenceWarning, SvrModel

log = logging.getLogger("svrconf")

METRIC_CHOICES = ("mae", "cmae02", "cmae03", "cmae04")

_PATH_KEYS = ("space", "instances", "dataset", "prepared", "pipeline", "model", "cv_report",
              "scenarios", "journal", "solutions", "report_dir", "holidays", "bundle", "target")


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)
    base: Path = Path(".")

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls({}, Path("."))
        p = Path(path)
        if not p.exists():
            raise DataError(f"config file {p} not found")
        with open(p) as fh:
            return cls(json.load(fh), p.resolve().parent)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def section(self, key: str) -> dict:
        return dict(self.values.get(key) or {})

    def path(self, key: str, required: bool = True, must_exist: bool = False) -> Path | None:
        v = self.values.get(key)
        if v is None:
            if required:
                raise DataError(f"config entry {key!r} is required")
            return None
        p = Path(v)
        p = p if p.is_absolute() else self.base / p
        if must_exist and not p.exists():
            raise DataError(f"{key} file {p} does not exist")
        return p

    def override(self, args: argparse.Namespace) -> None:
        v = self.values
        if getattr(args, "scenario", None):
            v["scenario"] = args.scenario
        if getattr(args, "metric", None):
            v.setdefault("cv", {})["metric"] = args.metric
        if getattr(args, "solver", None):
            v["solver"] = args.solver
        if getattr(args, "threshold", None) is not None:
            v["threshold"] = args.threshold
        if getattr(args, "time_limit", None) is not None:
            v["time_limit_s"] = args.time_limit
            v["cssp_time_limit_s"] = args.time_limit
        if getattr(args, "seed", None) is not None:
            v["seed"] = args.seed
        if getattr(args, "jobs", None) is not None:
            v["jobs"] = args.jobs
        if getattr(args, "gap_eps", False):
            v["gap_eps"] = True
        for key in ("out", "solutions", "dataset", "model"):
            val = getattr(args, key, None)
            if val is not None:
                v[key if key != "out" else "out"] = str(Path(val).resolve())

    @property
    def seed(self) -> int:
        return int(self.values.get("seed", 0))


# -- collect -------------------------------------------------------------------


def _adapter(cfg: RunConfig, feature_names):
    spec = cfg.section("adapter")
    if "synthetic" in spec:
        p = Path(spec["synthetic"])
        p = p if p.is_absolute() else cfg.base / p
        target = synth.SyntheticTarget.from_dict(json.loads(p.read_text()))
        return synth.SyntheticAdapter(target, feature_names)
    return SubprocessAdapter(spec.get("command"))


def cmd_collect(cfg: RunConfig) -> int:
    space = ConfigurationSpace.load(cfg.path("space", must_exist=True))
    instances = dsm.read_instances(cfg.path("instances", must_exist=True))
    out = cfg.path("dataset")
    feature_names = tuple(instances[0].raw) if instances else ()
    adapter = _adapter(cfg, feature_names)
    journal = cfg.path("journal", required=False) or Path(str(out) + ".journal")
    ds = dsm.collect(
        adapter, instances, space,
        seeds=cfg.get("seeds", [0, 1, 2]),
        time_limit_s=float(cfg.get("time_limit_s", 60.0)),
        threshold=float(cfg.get("threshold", dsm.DEFAULT_THRESHOLD)),
        jobs=int(cfg.get("jobs", 1)),
        journal=journal,
        gap_eps=bool(cfg.get("gap_eps", False)),
        feature_names=feature_names,
    )
    ds.to_csv(out)
    failed = ds.meta.get("n_failed_runs", 0)
    print(f"wrote {len(ds)} records to {out}")
    if failed:
        print(f"{failed} runs failed and were recorded with the sentinel value", file=sys.stderr)
        return 5
    return 0


# -- prepare -------------------------------------------------------------------


def _pipeline_from_config(cfg: RunConfig) -> features.FeaturePipeline:
    sec = cfg.section("features")
    holidays = ()
    if sec.get("holidays"):
        p = Path(sec["holidays"])
        p = p if p.is_absolute() else cfg.base / p
        holidays = tuple(d.isoformat() for d in sorted(features.read_holidays(p)))
    return features.FeaturePipeline(
        date_column=sec.get("date_column"),
        stats_groups={k: list(v) for k, v in (sec.get("stats_groups") or {}).items()},
        holidays=holidays,
        standardize=bool(sec.get("standardize", True)),
        drop=tuple(sec.get("drop", ())),
    )


def _engineer(ds: dsm.Dataset, pipe: features.FeaturePipeline, fit: bool) -> dsm.Dataset:
    frame = ds.frame
    inst = frame.drop_duplicates("instance_id").set_index("instance_id")[list(ds.feature_names)]
    eng = pipe.fit_transform(inst) if fit else pipe.transform(inst)
    rest = frame.drop(columns=list(ds.feature_names))
    merged = rest.merge(eng, left_on="instance_id", right_index=True, how="left")
    return dsm.Dataset(merged, tuple(eng.columns), ds.config_columns, ds.seed_columns, dict(ds.meta))


def _scenario(cfg: RunConfig, ds: dsm.Dataset) -> features.SelectionScenario:
    name = cfg.get("scenario", "noFS")
    if name == "noFS":
        return features.SelectionScenario("noFS")
    scen_path = cfg.path("scenarios", required=False)
    if scen_path is not None and scen_path.exists():
        scen = features.load_scenarios(scen_path)
        if name in scen:
            return scen[name]
    if name == "corrFS":
        sec = cfg.section("selection")
        return features.select_by_correlation(
            modelsel.in_sample(ds), int(sec.get("max_features", 22)),
            float(sec.get("redundancy_cutoff", 0.95)), name="corrFS",
        )
    raise DataError(f"scenario {name!r} not defined")


def cmd_prepare(cfg: RunConfig) -> int:
    raw = dsm.Dataset.read_csv(cfg.path("dataset", must_exist=True))
    threshold = float(cfg.get("threshold", dsm.DEFAULT_THRESHOLD))
    try:
        ds, norm = dsm.normalize_dataset(raw, threshold)
    except AllAboveThreshold as exc:
        worst = raw.frame.loc[raw.frame["p_raw"].idxmin()]
        raise AllAboveThreshold(
            f"{exc}; smallest p_raw is {worst['p_raw']:g} (instance {worst['instance_id']})"
        ) from None
    pipe = _pipeline_from_config(cfg)
    ds = _engineer(ds, pipe, fit=True)
    ds = dsm.split_instances(ds, float(cfg.get("os_fraction", 63 / 250)), cfg.seed)
    scen = _scenario(cfg, ds)
    ds = features.apply_scenario(ds, scen)
    size = cfg.get("subsample")
    if size:
        is_rows = ds.split_rows("IS")
        keep = dsm.subsample(is_rows, int(size), cfg.seed)
        ds = ds.with_frame(pd.concat([keep.frame, ds.split_rows("OS").frame], ignore_index=True))
    out = cfg.path("prepared")
    ds.to_csv(out)
    meta = {
        "pipeline": pipe.to_dict(),
        "normalization": norm.to_dict(),
        "scenario": scen.to_dict(),
        "split": dict(zip(ds.frame["instance_id"], ds.frame["split"])),
    }
    cfg.path("pipeline").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(ds)} prepared rows to {out}")
    return 0


# -- train ---------------------------------------------------------------------


def _plan(cfg: RunConfig) -> modelsel.CvPlan:
    sec = cfg.section("cv")
    return modelsel.CvPlan(
        outer_folds=int(sec.get("outer_folds", 5)),
        inner_folds=int(sec.get("inner_folds", 3)),
        draws=int(sec.get("draws", 20)),
        metric=str(sec.get("metric", "mae")),
        seed=int(sec.get("seed", cfg.seed)),
        tol=float(sec.get("tol", 1e-3)),
        max_passes=sec.get("max_passes"),
        standardize=bool(cfg.section("features").get("standardize", True)),
        jobs=int(cfg.get("jobs", 1)),
    )


def cmd_train(cfg: RunConfig) -> int:
    ds = dsm.Dataset.read_csv(cfg.path("prepared", must_exist=True))
    if ds.frame["p_norm"].isna().all():
        raise DataError("prepared dataset has no p_norm labels")
    space = modelsel.SearchSpace(**cfg.section("search"))
    plan = _plan(cfg)
    is_rows = modelsel.in_sample(ds)
    summary: dict[str, Any] = {"metric": plan.metric, "rows": len(is_rows)}
    reports = []
    if cfg.section("cv").get("nested", True):
        est, report = modelsel.nested_cv(is_rows, space, plan)
        summary["ncv_error"] = est
        reports.append(report)
    scored = modelsel.search_scores(is_rows, space, plan.inner_folds, plan.draws, plan.metric, plan.seed, plan)
    win = modelsel._argmin(scored)
    reports.append(pd.DataFrame(
        [("final", -1, d, h.C, h.gamma, h.epsilon, s) for d, (h, s) in enumerate(scored)],
        columns=list(modelsel.FOLD_REPORT_COLUMNS),
    ))
    hyper = scored[win][0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = modelsel.fit_final(ds, hyper, plan)
    model.meta.update(metric=plan.metric, scenario=cfg.get("scenario", "noFS"))
    model.save(cfg.path("model"))
    rep_path = cfg.path("cv_report", required=False) or Path(str(cfg.path("model")) + ".cv.csv")
    rep = pd.concat(reports, ignore_index=True)
    rep.insert(1, "metric", plan.metric)
    rep.to_csv(rep_path, index=False, float_format="%.17g", lineterminator="\n")
    summary.update(C=hyper.C, gamma=hyper.gamma, epsilon=hyper.epsilon,
                   n_support=int(model.support_points.shape[0]), converged=model.converged)
    print(json.dumps(summary, indent=1))
    return 0 if model.converged else 4


# -- configure -----------------------------------------------------------------


def _queries(cfg: RunConfig, model: SvrModel, features_file: Path):
    meta = json.loads(cfg.path("pipeline", must_exist=True).read_text())
    pipe = features.FeaturePipeline.from_dict(meta["pipeline"])
    table = pd.read_csv(features_file, dtype={"instance_id": str})
    if "instance_id" not in table.columns:
        raise UnknownColumn("features file lacks an instance_id column")
    ids = table["instance_id"].astype(str).tolist()
    raw = table.drop(columns=[c for c in ("instance_id", "optimum", "path") if c in table.columns])
    raw.index = ids
    eng = pipe.transform(raw)
    missing = [c for c in model.feature_names if c not in eng.columns]
    if missing:
        raise UnknownColumn(f"engineered features lack model columns {missing}")
    return ids, eng[list(model.feature_names)].to_numpy(float), meta.get("split", {})


def cmd_configure(cfg: RunConfig, features_file: str, with_global: bool = False) -> int:
    space = ConfigurationSpace.load(cfg.path("space", must_exist=True))
    model = SvrModel.load(cfg.path("model", must_exist=True))
    path = Path(features_file)
    if not path.exists():
        raise DataError(f"features file {path} does not exist")
    ids, F, split = _queries(cfg, model, path)
    solver = cfg.get("solver", "bnb")
    limit = float(cfg.get("cssp_time_limit_s", cssp.DEFAULT_TIME_LIMIT))
    rows = []
    for iid, f in zip(ids, F):
        prob = cssp.build_problem(model, space, f)
        sol = cssp.solve(prob, solver, limit, seed=cfg.seed, restarts=int(cfg.get("restarts", 5)))
        assert space.is_feasible(sol.config)
        glob = sol if solver == "enumerate" else (cssp.solve_enumerate(prob) if with_global else None)
        print(f"[{iid}]")
        print(sol.to_text(), end="")
        rows.append({
            "instance_id": iid,
            "set": split.get(iid, "new"),
            "scenario": model.meta.get("scenario", ""),
            "metric": model.meta.get("metric", ""),
            "solver": solver,
            "encoding": sol.config.encoding_str(),
            "objective": sol.objective,
            "status": sol.status,
            "nodes_or_moves": sol.nodes_or_moves,
            "elapsed_s": sol.elapsed_s,
            "global_objective": None if glob is None else glob.objective,
        })
    out = cfg.get("out") or cfg.get("solutions")
    if out:
        out = Path(out) if Path(out).is_absolute() else cfg.base / out
        pd.DataFrame(rows).to_csv(out, index=False, float_format="%.17g", lineterminator="\n")
    if rows:
        print(f"# mean solve time {np.mean([r['elapsed_s'] for r in rows]):.4f}s over {len(rows)} queries")
    return 0


# -- evaluate ------------------------------------------------------------------


def cmd_evaluate(cfg: RunConfig) -> int:
    space = ConfigurationSpace.load(cfg.path("space", must_exist=True))
    ds = dsm.Dataset.read_csv(cfg.path("dataset", must_exist=True))
    sols = pd.read_csv(cfg.path("solutions", must_exist=True), dtype={"instance_id": str, "encoding": str})
    default = space.default_configuration()
    if default is None:
        raise DataError("space file declares no default assignment")
    if list(ds.config_columns) != list(space.bit_names):
        raise DataError("dataset configuration columns do not match the space encoding")
    report = evaluate.build_report(ds, sols, default.encoding_str(),
                                   nonhit_only=bool(cfg.get("nonhit_only", False)))
    out_dir = cfg.path("report_dir", required=False) or Path("reports")
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "report.csv")
    text = report.to_text()
    (out_dir / "report.txt").write_text(text)
    print(text)
    return 0


# -- synth ---------------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> int:
    sec = cfg.section("synth")
    space_path = cfg.path("space", required=False)
    if space_path is not None and space_path.exists() and not sec.get("sizes"):
        space = ConfigurationSpace.load(space_path)
    else:
        space = synth.grid_space(sec.get("sizes", [2, 3, 4]))
    bundle = synth.make_bundle(
        seed=int(sec.get("seed", cfg.seed)),
        n_instances=int(sec.get("n_instances", 10)),
        space=space,
        n_features=int(sec.get("n_features", 4)),
        noise=float(sec.get("noise", 0.0)),
        n_centers=int(sec.get("n_centers", 24)),
        gamma=float(sec.get("gamma", 0.25)),
    )
    out = Path(sec.get("out", "bundle"))
    out = out if out.is_absolute() else cfg.base / out
    bundle.save(out)
    print(f"wrote synthetic bundle ({len(bundle.instances)} instances, "
          f"{len(bundle.truth) // max(1, len(bundle.instances))} configurations each) to {out}")
    return 0


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration (JSON)")
    common.add_argument("--scenario", metavar="NAME")
    common.add_argument("--metric", choices=METRIC_CHOICES)
    common.add_argument("--solver", choices=cssp.SOLVERS)
    common.add_argument("--threshold", type=float, metavar="FLOAT")
    common.add_argument("--time-limit", type=float, metavar="SECONDS", dest="time_limit")
    common.add_argument("--seed", type=int, metavar="INT")
    common.add_argument("--jobs", type=int, metavar="INT")
    common.add_argument("--gap-eps", action="store_true", dest="gap_eps",
                        help="use max(|opt|, 1e-10) as gap denominator")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="svrconf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("collect", parents=[common], help="run the target on every configuration")
    sub.add_parser("prepare", parents=[common], help="normalize, engineer, select, split")
    sub.add_parser("train", parents=[common], help="nested CV, search and final fit")
    p = sub.add_parser("configure", parents=[common], help="recommend configurations for instances")
    p.add_argument("features_file", help="CSV of instance features (instance_id + raw columns)")
    p.add_argument("--out", help="write per-instance solutions CSV here")
    p.add_argument("--with-global", action="store_true", dest="with_global",
                   help="also solve by enumeration and record the global optimum")
    p = sub.add_parser("evaluate", parents=[common], help="aggregate solution quality reports")
    p.add_argument("--solutions", help="solutions CSV from configure")
    p.add_argument("--dataset", help="fully enumerated raw dataset")
    sub.add_parser("synth", parents=[common], help="generate a synthetic target bundle")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        cfg.override(args)
        if args.command == "collect":
            return cmd_collect(cfg)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "configure":
            return cmd_configure(cfg, args.features_file, args.with_global)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "synth":
            return cmd_synth(cfg)
    except EmptySpace as exc:
        print(f"error: EmptySpace: {exc}", file=sys.stderr)
        return exc.exit_code
    except SvrConfError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
