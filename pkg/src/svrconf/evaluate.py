"""Evaluation statistics: solver quality, wins over the default, gap summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import EmptyInput, LengthMismatch

HIT_TOL = 1e-9

REPORT_FIELDS = (
    "set", "scenario", "metric", "n",
    "pct_glob_mins", "avg_loc_mins", "avg_cssp_time_s",
    "pct_w", "pct_wd", "pct_w_nond", "avg_d", "avg_w", "avg_l",
    "pct_feas_sol", "pct_feas_default",
    "avg_primal_sol", "avg_primal_default", "avg_dual_sol", "avg_dual_default",
)


def _mean(values) -> float | None:
    values = list(values)
    return float(np.mean(values)) if values else None


def cssp_quality(pairs: Sequence, nonhit_only: bool = False) -> tuple[float, float, float]:
    """(percent global hits, mean objective gap, mean heuristic time).

    ``pairs`` holds (heuristic, global) solutions for the same problems. The
    gap mean runs over every pair with hits counting zero, unless
    ``nonhit_only`` restricts it to the misses.
    """
    if not pairs:
        raise EmptyInput("no solution pairs")
    gaps, times, hits = [], [], 0
    for heur, glob in pairs:
        g = abs(heur.objective - glob.objective)
        hit = g <= HIT_TOL
        hits += hit
        gaps.append(0.0 if hit else g)
        times.append(heur.elapsed_s)
    if nonhit_only:
        miss = [g for g in gaps if g > 0.0]
        avg = float(np.mean(miss)) if miss else 0.0
    else:
        avg = float(np.mean(gaps))
    return 100.0 * hits / len(pairs), avg, float(np.mean(times))


def round_sig(x: float, digits: int) -> float:
    """Round to ``digits`` significant digits (mantissa in scientific notation)."""
    if not math.isfinite(x) or x == 0.0:
        return x
    return float(f"{x:.{digits - 1}e}")


@dataclass(frozen=True)
class WinStats:
    pct_w: float
    pct_wd: float
    pct_w_nond: float
    avg_d: float | None
    avg_w: float | None
    avg_l: float | None
    n_wins: int = 0
    n_draws: int = 0
    n_losses: int = 0

    def __iter__(self):
        return iter((self.pct_w, self.pct_wd, self.pct_w_nond, self.avg_d, self.avg_w, self.avg_l))


def win_stats(p_sol, p_default, p_best, digits: int = 16) -> WinStats:
    """Compare recommended vs default performance per instance (lower is better)."""
    s = np.asarray(p_sol, dtype=float)
    d = np.asarray(p_default, dtype=float)
    b = np.asarray(p_best, dtype=float)
    if not (s.shape == d.shape == b.shape):
        raise LengthMismatch("p_sol, p_default and p_best must have equal lengths")
    if s.size == 0:
        raise EmptyInput("no instances")
    if digits < 1:
        raise ValueError("digits must be at least 1")
    rs = np.array([round_sig(v, digits) for v in s])
    rd = np.array([round_sig(v, digits) for v in d])
    win = rs < rd
    draw = rs == rd
    loss = rs > rd
    n = s.size
    nw, nd, nl = int(win.sum()), int(draw.sum()), int(loss.sum())
    return WinStats(
        pct_w=100.0 * nw / n,
        pct_wd=100.0 * (nw + nd) / n,
        pct_w_nond=100.0 * nw / (nw + nl) if nw + nl else 0.0,
        avg_d=_mean(np.abs(s[draw] - b[draw])),
        avg_w=_mean(np.abs(d[win] - s[win])),
        avg_l=_mean(np.abs(d[loss] - s[loss])),
        n_wins=nw,
        n_draws=nd,
        n_losses=nl,
    )


def _gap(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def feasibility_stats(records_sol: Sequence, records_default: Sequence) -> dict:
    """Feasibility rates and mean gaps for paired per-instance runs.

    Each record is a ``(primal_gap, dual_gap)`` pair, either possibly absent
    (``None`` or NaN); an absent primal gap means no feasible solution. Gap
    means are taken over instances where both runs are feasible, and for dual
    gaps additionally where both report a bound.
    """
    if len(records_sol) != len(records_default):
        raise LengthMismatch("paired records must have equal lengths")
    if not records_sol:
        raise EmptyInput("no records")
    sol = [(_gap(p), _gap(q)) for p, q in records_sol]
    dft = [(_gap(p), _gap(q)) for p, q in records_default]
    n = len(sol)
    both = [(a, b) for a, b in zip(sol, dft) if a[0] is not None and b[0] is not None]
    dual = [(a, b) for a, b in both if a[1] is not None and b[1] is not None]
    return {
        "pct_feas_sol": 100.0 * sum(r[0] is not None for r in sol) / n,
        "pct_feas_default": 100.0 * sum(r[0] is not None for r in dft) / n,
        "avg_primal_sol": _mean(a[0] for a, _ in both),
        "avg_primal_default": _mean(b[0] for _, b in both),
        "avg_dual_sol": _mean(a[1] for a, _ in dual),
        "avg_dual_default": _mean(b[1] for _, b in dual),
    }


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append({k: row.get(k) for k in REPORT_FIELDS})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(REPORT_FIELDS))

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g", lineterminator="\n")

    def to_text(self) -> str:
        blocks = [
            ("CSSP solution quality w.r.t. the learned map",
             ("pct_glob_mins", "avg_loc_mins", "avg_cssp_time_s")),
            ("Recommended vs default configuration, raw performance",
             ("pct_w", "pct_wd", "pct_w_nond", "avg_d", "avg_w", "avg_l")),
            ("Feasibility and gaps",
             ("pct_feas_sol", "pct_feas_default", "avg_primal_sol",
              "avg_primal_default", "avg_dual_sol", "avg_dual_default")),
        ]
        out = []
        for title, cols in blocks:
            head = ("set", "scenario", "metric") + cols
            body = [[_fmt(r[c]) for c in head] for r in self.rows]
            widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
            out.append(title)
            out.append(" | ".join(h.ljust(w) for h, w in zip(head, widths)))
            out.append("-+-".join("-" * w for w in widths))
            out.extend(" | ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body)
            out.append("")
        return "\n".join(out)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    if isinstance(v, float):
        if v != 0.0 and (abs(v) >= 1e4 or abs(v) < 1e-2):
            return f"{v:.3e}"
        return f"{v:.2f}"
    return str(v)


@dataclass(frozen=True)
class _Sol:
    objective: float
    elapsed_s: float


def build_report(dataset, solutions: pd.DataFrame, default_encoding: str,
                 digits: int = 16, nonhit_only: bool = False) -> EvalReport:
    """Aggregate per-instance solutions against a fully enumerated dataset.

    ``dataset`` must carry every configuration's raw performance for each
    instance. ``solutions`` has one row per (instance, set, scenario, metric)
    with the chosen ``encoding``, its ``objective``, the ``elapsed_s`` and,
    when known, ``global_objective`` from exact enumeration.
    """
    frame = dataset.frame
    enc = frame[list(dataset.config_columns)].astype(int).astype(str).agg(",".join, axis=1)
    lookup = frame.assign(_enc=enc).set_index(["instance_id", "_enc"])
    best = frame.groupby("instance_id")["p_raw"].min()
    report = EvalReport()
    sol = solutions.copy()
    for col, dflt in (("set", ""), ("scenario", ""), ("metric", "")):
        if col not in sol.columns:
            sol[col] = dflt
        sol[col] = sol[col].fillna(dflt).astype(str)
    for (split, scen, metric), grp in sol.groupby(["set", "scenario", "metric"], sort=True):
        ids = grp["instance_id"].astype(str).tolist()
        row = {"set": split, "scenario": scen, "metric": metric, "n": len(ids)}
        if "global_objective" in grp.columns and grp["global_objective"].notna().all():
            pairs = [(_Sol(o, t), _Sol(g, 0.0)) for o, t, g in
                     zip(grp["objective"], grp["elapsed_s"], grp["global_objective"])]
            row["pct_glob_mins"], row["avg_loc_mins"], row["avg_cssp_time_s"] = cssp_quality(pairs, nonhit_only)
        else:
            row["avg_cssp_time_s"] = float(grp["elapsed_s"].mean())
        rec_sol = lookup.loc[list(zip(ids, grp["encoding"].astype(str)))]
        rec_def = lookup.loc[[(i, default_encoding) for i in ids]]
        ws = win_stats(rec_sol["p_raw"], rec_def["p_raw"], best.loc[ids], digits)
        row.update(pct_w=ws.pct_w, pct_wd=ws.pct_wd, pct_w_nond=ws.pct_w_nond,
                   avg_d=ws.avg_d, avg_w=ws.avg_w, avg_l=ws.avg_l)
        row.update(feasibility_stats(
            list(zip(rec_sol["primal_gap"], rec_sol["dual_gap"])),
            list(zip(rec_def["primal_gap"], rec_def["dual_gap"])),
        ))
        report.add(**row)
    return report
