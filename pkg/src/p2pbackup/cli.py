"""Command-line entry points.

Subcommands::

    simulate   --config PATH [--jobs N] [--out DIR]   run a full sweep
    gen-traces --config PATH --out PATH               write synthetic traces
    plan       --k K --availability A --target T      baseline fragment count
    report     --in DIR --format csv|json             re-aggregate peer tables

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment, metrics, traces as traces_mod
from .experiment import ConfigError
from .model import InvalidArgument
from .policy import UnreachableTarget, baseline_fragment_count

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="p2pbackup",
        description="Peer-to-peer backup redundancy simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment sweep")
    sim.add_argument("--config", required=True, type=Path)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--out", type=Path, default=None)

    gen = sub.add_parser("gen-traces", help="generate synthetic traces")
    gen.add_argument("--config", required=True, type=Path)
    gen.add_argument("--out", required=True, type=Path)

    plan = sub.add_parser("plan", help="baseline fragment-count planner")
    plan.add_argument("--k", required=True, type=int)
    plan.add_argument("--availability", required=True, type=float)
    plan.add_argument("--target", required=True, type=float)
    plan.add_argument("--n-max", type=int, default=None)

    rep = sub.add_parser("report", help="re-aggregate an output directory")
    rep.add_argument("--in", dest="in_dir", required=True, type=Path)
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _cmd_simulate(args) -> int:
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = experiment.parse_experiment(text, args.config.parent, args.out)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    for w in spec.warnings:
        print(f"warning: {w}", file=sys.stderr)
    try:
        out_dir = experiment.run_experiment(spec, jobs=args.jobs)
    except (InvalidArgument, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote reports to {out_dir}")
    return EXIT_OK


def _cmd_gen_traces(args) -> int:
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = experiment.parse_experiment(text, args.config.parent)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    if spec.source.synthetic is None:
        print("config error: gen-traces needs synthetic trace parameters",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        trs = traces_mod.generate_synthetic_traces(spec.source.synthetic)
        with args.out.open("w", newline="") as fh:
            traces_mod.write_traces(trs, fh)
    except OSError as exc:
        print(f"error: cannot write traces: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(trs)} traces to {args.out}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    try:
        n = baseline_fragment_count(args.k, args.availability, args.target,
                                    n_max=args.n_max)
    except (InvalidArgument, UnreachableTarget) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"n = {n}")
    print(f"r = {n / args.k}")
    return EXIT_OK


def _cmd_report(args) -> int:
    in_dir: Path = args.in_dir
    if not in_dir.is_dir():
        print(f"error: not a directory: {in_dir}", file=sys.stderr)
        return EXIT_CONFIG
    tables = sorted(in_dir.glob("*_peers.csv"))
    if not tables:
        print(f"error: no *_peers.csv tables under {in_dir}", file=sys.stderr)
        return EXIT_CONFIG
    import csv as _csv
    ext = args.format
    for table in tables:
        prefix = table.name[: -len("_peers.csv")]
        with table.open() as fh:
            rows = list(_csv.DictReader(fh))
        ttb = [float(r["ttb"]) / float(r["min_ttb"]) for r in rows
               if r["ttb"] and r["min_ttb"]]
        ttr = [float(r["ttr"]) / float(r["min_ttr"]) for r in rows
               if r["ttr"] and r["min_ttr"]]
        if ttb:
            metrics.export(metrics.cdf(ttb, label=f"{prefix} ttb/min_ttb"),
                           ext, in_dir / f"{prefix}_ttb_ratio_cdf.{ext}")
        if ttr:
            metrics.export(metrics.cdf(ttr, label=f"{prefix} ttr/min_ttr"),
                           ext, in_dir / f"{prefix}_ttr_ratio_cdf.{ext}")
    print(f"re-aggregated {len(tables)} cells in {in_dir}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "gen-traces": _cmd_gen_traces,
        "plan": _cmd_plan,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
