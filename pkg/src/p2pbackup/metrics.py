"""Aggregation of simulation outcomes into plot-ready series and tables.

Produces empirical CDFs (TTB/minTTB, TTR/minTTR and friends), mean
redundancy-factor summaries grouped by (w, tau, policy), and the data-loss
categorization table. Exports are CSV or JSON with floats at six
significant digits; the JSON layout is described by
``schemas/report.schema.json``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .model import InvalidArgument
from .simulator import (
    LOSS_FAILED_RESTORE,
    LOSS_INCOMPLETE,
    LOSS_NONE,
    LOSS_UNAVOIDABLE,
    SimulationOutcome,
)


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


@dataclass(frozen=True)
class CdfSeries:
    """Empirical CDF as sorted (value, cumulative fraction) steps."""

    points: tuple[tuple[float, float], ...]
    label: str = ""

    def __post_init__(self):
        if not self.points:
            raise InvalidArgument("CDF needs at least one point")
        prev_v, prev_f = None, 0.0
        for v, f in self.points:
            if prev_v is not None and v <= prev_v:
                raise InvalidArgument("CDF values must strictly increase")
            if f <= prev_f or f > 1 + 1e-12:
                raise InvalidArgument("CDF fractions must increase to 1")
            prev_v, prev_f = v, f
        if abs(self.points[-1][1] - 1.0) > 1e-12:
            raise InvalidArgument("CDF must end at fraction 1")

    def quantile(self, q: float) -> float:
        """Smallest value whose cumulative fraction reaches q."""
        if not 0 < q <= 1:
            raise InvalidArgument(f"q must be in (0, 1], got {q}")
        for v, f in self.points:
            if f >= q - 1e-12:
                return v
        return self.points[-1][0]

    def median(self) -> float:
        return self.quantile(0.5)


def cdf(values: Sequence[float], label: str = "") -> CdfSeries:
    """Empirical CDF with point i at (i+1)/N; equal values collapse to one step."""
    if not values:
        raise InvalidArgument("cdf needs at least one value")
    ordered = sorted(values)
    n = len(ordered)
    points = []
    for i, v in enumerate(ordered):
        if i + 1 < n and ordered[i + 1] == v:
            continue  # keep only the last (highest-fraction) step per value
        points.append((v, (i + 1) / n))
    return CdfSeries(points=tuple(points), label=label)


@dataclass(frozen=True)
class LossTable:
    """Data-loss percentages for one (policy, tau, w) cell, averaged over runs.

    Categories are exclusive: total = incomplete_backup + failed_restore;
    unavoidable is the subset of incomplete losses where the owner died
    before its minimum possible backup time. ``*_of_crashed_pct`` report the
    same counts over peers that actually crashed, the alternative
    denominator.
    """

    policy_name: str
    tau: float
    w: float
    runs: int
    peers_per_run: int
    total_pct: float
    incomplete_pct: float
    unavoidable_pct: float
    failed_restore_pct: float
    crashed_per_run: float
    total_of_crashed_pct: float
    unfinished_backup_pct: float

    def __post_init__(self):
        tol = 1e-9
        if not (self.unavoidable_pct <= self.incomplete_pct + tol
                and self.incomplete_pct <= self.total_pct + tol):
            raise InvalidArgument("loss table ordering violated")
        if abs(self.total_pct - (self.incomplete_pct + self.failed_restore_pct)) > 1e-6:
            raise InvalidArgument("loss categories must sum to total")


def _same_cell(outcomes: Sequence[SimulationOutcome]) -> None:
    first = outcomes[0]
    for o in outcomes[1:]:
        if (o.policy_name, o.tau, o.w, o.k, o.horizon, len(o.peers)) != (
                first.policy_name, first.tau, first.w, first.k,
                first.horizon, len(first.peers)):
            raise InvalidArgument("outcomes mix different configurations")


def categorize_losses(outcomes: Sequence[SimulationOutcome]) -> LossTable:
    """Average per-run loss percentages over a set of same-config runs."""
    if not outcomes:
        raise InvalidArgument("need at least one outcome")
    _same_cell(outcomes)
    pct_total, pct_inc, pct_unav, pct_fail, pct_unfin = [], [], [], [], []
    crashed_counts, pct_total_crashed = [], []
    for o in outcomes:
        n = len(o.peers)
        inc = sum(1 for p in o.peers
                  if p.loss_category in (LOSS_INCOMPLETE, LOSS_UNAVOIDABLE))
        unav = sum(1 for p in o.peers if p.loss_category == LOSS_UNAVOIDABLE)
        fail = sum(1 for p in o.peers if p.loss_category == LOSS_FAILED_RESTORE)
        unfin = sum(1 for p in o.peers if p.unfinished_backup_at_horizon)
        crashed = sum(1 for p in o.peers if p.death_time is not None)
        pct_inc.append(100.0 * inc / n)
        pct_unav.append(100.0 * unav / n)
        pct_fail.append(100.0 * fail / n)
        pct_total.append(100.0 * (inc + fail) / n)
        pct_unfin.append(100.0 * unfin / n)
        crashed_counts.append(crashed)
        pct_total_crashed.append(100.0 * (inc + fail) / crashed if crashed else 0.0)
    runs = len(outcomes)
    mean = lambda xs: sum(xs) / runs
    return LossTable(
        policy_name=outcomes[0].policy_name, tau=outcomes[0].tau,
        w=outcomes[0].w, runs=runs, peers_per_run=len(outcomes[0].peers),
        total_pct=mean(pct_total), incomplete_pct=mean(pct_inc),
        unavoidable_pct=mean(pct_unav), failed_restore_pct=mean(pct_fail),
        crashed_per_run=mean([float(c) for c in crashed_counts]),
        total_of_crashed_pct=mean(pct_total_crashed),
        unfinished_backup_pct=mean(pct_unfin),
    )


def ttb_ratios(outcomes: Sequence[SimulationOutcome]) -> list[float]:
    """TTB / minTTB over all completed backups in all runs."""
    out = []
    for o in outcomes:
        for p in o.peers:
            if p.ttb is not None and p.min_ttb:
                out.append(p.ttb / p.min_ttb)
    return out


def ttr_ratios(outcomes: Sequence[SimulationOutcome]) -> list[float]:
    """TTR / minTTR over all completed restores in all runs."""
    out = []
    for o in outcomes:
        for p in o.peers:
            if p.ttr is not None and p.min_ttr:
                out.append(p.ttr / p.min_ttr)
    return out


@dataclass(frozen=True)
class RedundancyRow:
    policy_name: str
    tau: float
    w: float
    runs: int
    completed_backups: int
    mean_r: float


def redundancy_summary(outcomes: Sequence[SimulationOutcome]) -> list[RedundancyRow]:
    """Mean final redundancy factor n/k per (w, tau, policy) group."""
    groups: dict[tuple, list[SimulationOutcome]] = {}
    for o in outcomes:
        groups.setdefault((o.w, o.tau, o.policy_name), []).append(o)
    rows = []
    for (w, tau, policy_name), group in sorted(groups.items()):
        rs, completed = [], 0
        for o in group:
            for p in o.peers:
                if p.n_at_completion:
                    rs.append(p.n_at_completion / o.k)
                    completed += 1
        mean_r = sum(rs) / len(rs) if rs else float("nan")
        rows.append(RedundancyRow(policy_name=policy_name, tau=tau, w=w,
                                  runs=len(group), completed_backups=completed,
                                  mean_r=mean_r))
    return rows


# ------------------------------------------------------------------- export

def _report_payload(report) -> dict:
    if isinstance(report, CdfSeries):
        return {
            "kind": "cdf",
            "label": report.label,
            "points": [{"value": float(_fmt(v)), "fraction": float(_fmt(f))}
                       for v, f in report.points],
        }
    if isinstance(report, LossTable):
        return {
            "kind": "loss_table",
            "policy": report.policy_name,
            "tau_s": float(_fmt(report.tau)),
            "w_s": float(_fmt(report.w)),
            "runs": report.runs,
            "peers_per_run": report.peers_per_run,
            "total_pct": float(_fmt(report.total_pct)),
            "incomplete_backup_pct": float(_fmt(report.incomplete_pct)),
            "incomplete_unavoidable_pct": float(_fmt(report.unavoidable_pct)),
            "failed_restore_pct": float(_fmt(report.failed_restore_pct)),
            "crashed_per_run": float(_fmt(report.crashed_per_run)),
            "total_of_crashed_pct": float(_fmt(report.total_of_crashed_pct)),
            "unfinished_backup_pct": float(_fmt(report.unfinished_backup_pct)),
        }
    if isinstance(report, list) and all(isinstance(r, RedundancyRow) for r in report):
        return {
            "kind": "redundancy_summary",
            "rows": [{
                "policy": r.policy_name,
                "tau_s": float(_fmt(r.tau)),
                "w_s": float(_fmt(r.w)),
                "runs": r.runs,
                "completed_backups": r.completed_backups,
                "mean_r": float(_fmt(r.mean_r)),
            } for r in report],
        }
    raise InvalidArgument(f"unsupported report type {type(report).__name__}")


def export(report, format: str, path) -> None:
    """Write a report as CSV or JSON; floats carry six significant digits."""
    if format not in ("csv", "json"):
        raise InvalidArgument(f"format must be 'csv' or 'json', got {format!r}")
    path = Path(path)
    payload = _report_payload(report)
    try:
        with path.open("w", newline="") as fh:
            if format == "json":
                json.dump(payload, fh, indent=2)
                fh.write("\n")
                return
            writer = csv.writer(fh, lineterminator="\n")
            if payload["kind"] == "cdf":
                writer.writerow(["value", "fraction"])
                for pt in payload["points"]:
                    writer.writerow([_fmt(pt["value"]), _fmt(pt["fraction"])])
            elif payload["kind"] == "loss_table":
                keys = [k for k in payload if k != "kind"]
                writer.writerow(keys)
                writer.writerow([payload[k] for k in keys])
            else:
                keys = ["policy", "tau_s", "w_s", "runs", "completed_backups", "mean_r"]
                writer.writerow(keys)
                for row in payload["rows"]:
                    writer.writerow([row[k] for k in keys])
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
