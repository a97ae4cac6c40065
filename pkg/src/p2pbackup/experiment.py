"""Experiment configuration and sweep orchestration.

Configs are flat INI-style text (key = value, one section per concern):

    [policy]     redundancy parameters; omitted keys take the reference defaults
    [sweep]      lists for w, tau, policy names, and seeds
    [traces]     either file inputs or synthetic-generator parameters
    [output]     output directory (overridable on the command line)

A sweep executes every (policy, tau, w, seed) cell, writes per-cell peer
tables and aggregate reports named ``{policy}_{tau}_{w}_{metric}.{ext}``,
and records the fully resolved configuration in ``manifest.json`` so any
run can be replayed exactly. Timestamps appear only in the manifest.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import metrics, traces as traces_mod
from .model import InvalidArgument, PolicyConfig, WEEK
from .policy import baseline_fragment_count
from .simulator import AdaptivePolicy, BaselinePolicy, Simulation

DEFAULT_SEED_COUNT = 10


class ConfigError(ValueError):
    """One or more configuration problems; message lists each by field name."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(diagnostics))


_POLICY_FIELDS = {
    "object_size": float, "fragment_size": float, "tau": float, "w": float,
    "sigma1": float, "alpha": float, "sigma2_floor": float,
    "baseline_target_availability": float, "baseline_mean_availability": float,
    "capacity": float, "maintenance_timeout": float,
}


def _parse_ini(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        # a bare key=value preamble is accepted as the [policy] section
        if text.strip() and not text.lstrip().startswith("["):
            text = "[policy]\n" + text
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", "?")
        raise ConfigError([f"syntax error at line {line}: {exc.message}"]) from exc
    return parser


def validate_config(text: str) -> tuple[PolicyConfig, list[str]]:
    """Build a PolicyConfig from config text, applying reference defaults.

    Returns the config plus non-fatal warnings. Every violated invariant is
    reported with its field name; all problems are collected before failing.
    """
    parser = _parse_ini(text)
    values: dict = {}
    diagnostics: list[str] = []
    warnings: list[str] = []
    if parser.has_section("policy"):
        for key, raw in parser.items("policy"):
            if key not in _POLICY_FIELDS:
                diagnostics.append(f"unknown policy field {key!r}")
                continue
            try:
                values[key] = _POLICY_FIELDS[key](raw)
            except ValueError:
                diagnostics.append(f"{key}: not a number: {raw!r}")
    if diagnostics:
        raise ConfigError(diagnostics)
    # field-by-field checks with named diagnostics, mirroring PolicyConfig
    probe = {
        "sigma1": lambda v: 0 < v < 1 or diagnostics.append(
            f"sigma1 must be in (0, 1), got {v}"),
        "tau": lambda v: v > 0 or diagnostics.append(f"tau must be > 0, got {v}"),
        "w": lambda v: v >= 0 or diagnostics.append(f"w must be >= 0, got {v}"),
        "alpha": lambda v: v >= 1 or diagnostics.append(f"alpha must be >= 1, got {v}"),
        "object_size": lambda v: v > 0 or diagnostics.append(
            f"object_size must be > 0, got {v}"),
        "fragment_size": lambda v: v > 0 or diagnostics.append(
            f"fragment_size must be > 0, got {v}"),
        "sigma2_floor": lambda v: v >= 0 or diagnostics.append(
            f"sigma2_floor must be >= 0, got {v}"),
        "capacity": lambda v: v >= 0 or diagnostics.append(
            f"capacity must be >= 0, got {v}"),
        "baseline_target_availability": lambda v: 0 < v < 1 or diagnostics.append(
            f"baseline_target_availability must be in (0, 1), got {v}"),
        "baseline_mean_availability": lambda v: 0 < v < 1 or diagnostics.append(
            f"baseline_mean_availability must be in (0, 1), got {v}"),
    }
    for key, check in probe.items():
        if key in values:
            check(values[key])
    if diagnostics:
        raise ConfigError(diagnostics)
    try:
        config = PolicyConfig(**values)
    except InvalidArgument as exc:
        raise ConfigError([str(exc)]) from exc
    if config.fragment_size > config.object_size:
        warnings.append(
            "fragment_size exceeds object_size; k = 1, a single fragment "
            "carries the whole object")
    return config, warnings


@dataclass(frozen=True)
class TraceSource:
    """Where peers come from: trace/bandwidth files, or the synthetic generator."""

    trace_file: Path | None = None
    bandwidth_file: Path | None = None
    synthetic: traces_mod.SyntheticTraceParams | None = None
    bandwidth_seed: int = 1
    peer_seed: int = 2
    min_availability: float = traces_mod.DEFAULT_MIN_AVAILABILITY


@dataclass(frozen=True)
class ExperimentSpec:
    base: PolicyConfig
    w_values: tuple[float, ...]
    tau_values: tuple[float, ...]
    policies: tuple[str, ...]  # subset of {"adaptive", "baseline"}
    seeds: tuple[int, ...]
    source: TraceSource
    out_dir: Path
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not (self.w_values and self.tau_values and self.policies and self.seeds):
            raise InvalidArgument("sweep lists and seeds must be non-empty")
        bad = [p for p in self.policies if p not in ("adaptive", "baseline")]
        if bad:
            raise InvalidArgument(f"unknown policies: {bad}")


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.replace(",", " ").split())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.replace(",", " ").split())


def parse_experiment(text: str, base_dir: Path, out_dir: Path | None = None) -> ExperimentSpec:
    """Parse a full experiment config (policy + sweep + traces + output)."""
    base, warnings = validate_config(text)
    parser = _parse_ini(text)
    diagnostics: list[str] = []

    w_values = (base.w,)
    tau_values = (base.tau,)
    policies: tuple[str, ...] = ("adaptive", "baseline")
    seeds = tuple(range(DEFAULT_SEED_COUNT))
    if parser.has_section("sweep"):
        sw = parser["sweep"]
        try:
            if "w" in sw:
                w_values = _floats(sw["w"])
            if "tau" in sw:
                tau_values = _floats(sw["tau"])
            if "policies" in sw:
                policies = tuple(sw["policies"].replace(",", " ").split())
            if "seeds" in sw:
                seeds = _ints(sw["seeds"])
            elif "seed_count" in sw:
                seeds = tuple(range(int(sw["seed_count"])))
        except ValueError as exc:
            diagnostics.append(f"sweep: {exc}")

    synthetic = None
    trace_file = bandwidth_file = None
    bandwidth_seed, peer_seed = 1, 2
    min_availability = traces_mod.DEFAULT_MIN_AVAILABILITY
    if parser.has_section("traces"):
        tr = parser["traces"]
        try:
            bandwidth_seed = int(tr.get("bandwidth_seed", "1"))
            peer_seed = int(tr.get("peer_seed", "2"))
            min_availability = float(tr.get("min_availability",
                                            str(min_availability)))
            if "file" in tr:
                trace_file = (base_dir / tr["file"]).resolve()
                if "bandwidth_file" in tr:
                    bandwidth_file = (base_dir / tr["bandwidth_file"]).resolve()
            else:
                synthetic = traces_mod.SyntheticTraceParams(
                    peer_count=int(tr.get("peer_count", "300")),
                    horizon=float(tr.get("horizon_s", str(12 * WEEK))),
                    mean_session=float(tr.get("mean_session_s", str(8 * 3600))),
                    beta_a=float(tr.get("beta_a", "1.6")),
                    beta_b=float(tr.get("beta_b", "3.2")),
                    seed=int(tr.get("seed", "0")),
                )
        except (ValueError, InvalidArgument) as exc:
            diagnostics.append(f"traces: {exc}")
    else:
        synthetic = traces_mod.SyntheticTraceParams(
            peer_count=300, horizon=12 * WEEK, seed=0)
    if diagnostics:
        raise ConfigError(diagnostics)

    if out_dir is None:
        if parser.has_section("output") and "dir" in parser["output"]:
            out_dir = (base_dir / parser["output"]["dir"]).resolve()
        else:
            out_dir = (base_dir / "out").resolve()
    return ExperimentSpec(
        base=base, w_values=w_values, tau_values=tau_values,
        policies=policies, seeds=seeds,
        source=TraceSource(trace_file=trace_file, bandwidth_file=bandwidth_file,
                           synthetic=synthetic, bandwidth_seed=bandwidth_seed,
                           peer_seed=peer_seed, min_availability=min_availability),
        out_dir=Path(out_dir), warnings=tuple(warnings),
    )


def build_population(spec: ExperimentSpec):
    """Materialize the peer population named by the spec's trace source."""
    src = spec.source
    if src.trace_file is not None:
        with open(src.trace_file) as fh:
            # file traces must state their horizon via a synthetic-free config;
            # use the longest event time rounded up to a week as the horizon
            rows = fh.read().splitlines()
        last = 0.0
        for row in rows[1:]:
            parts = row.split(",")
            if len(parts) == 3:
                try:
                    last = max(last, float(parts[1]))
                except ValueError:
                    pass
        horizon = max(WEEK, last)
        with open(src.trace_file) as fh:
            trs = traces_mod.parse_traces(fh, horizon)
    else:
        trs = traces_mod.generate_synthetic_traces(src.synthetic)
    trs = traces_mod.filter_min_availability(trs, src.min_availability)
    if not trs:
        raise InvalidArgument("no traces pass the minimum-availability filter")
    if src.bandwidth_file is not None:
        with open(src.bandwidth_file) as fh:
            dist = traces_mod.BandwidthDistribution.from_csv(fh)
    else:
        dist = traces_mod.BandwidthDistribution.synthetic_lognormal(src.bandwidth_seed)
    return traces_mod.build_peers(trs, dist, spec.base.capacity, src.peer_seed)


def _cell_config(base: PolicyConfig, tau: float, w: float) -> PolicyConfig:
    return replace(base, tau=tau, w=w)


def _make_policy(name: str, config: PolicyConfig):
    if name == "adaptive":
        return AdaptivePolicy()
    n_fixed = baseline_fragment_count(
        config.k, config.baseline_mean_availability,
        config.baseline_target_availability)
    return BaselinePolicy(n_fixed=n_fixed)


def _run_cell_seed(args):
    config, policy, peers, seed = args
    return Simulation(config, policy, peers, seed,
                      keep_event_log=False).run()


def _tag(x: float) -> str:
    return format(x, ".6g").replace(".", "p")


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> Path:
    """Execute the full grid and write reports; returns the output directory."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    peers = build_population(spec)
    started = time.time()

    cells = [(policy_name, tau, w)
             for policy_name in spec.policies
             for tau in spec.tau_values
             for w in spec.w_values]
    jobs_list = []
    for policy_name, tau, w in cells:
        config = _cell_config(spec.base, tau, w)
        policy = _make_policy(policy_name, config)
        for seed in spec.seeds:
            jobs_list.append((policy_name, tau, w, (config, policy, peers, seed)))

    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_seed, [j[3] for j in jobs_list]))
    else:
        results = [_run_cell_seed(j[3]) for j in jobs_list]

    by_cell: dict[tuple, list] = {}
    for (policy_name, tau, w, _), outcome in zip(jobs_list, results):
        by_cell.setdefault((policy_name, tau, w), []).append(outcome)

    all_outcomes = []
    for (policy_name, tau, w), outcomes in by_cell.items():
        all_outcomes.extend(outcomes)
        prefix = f"{policy_name}_{_tag(tau)}_{_tag(w)}"
        _write_peer_table(spec.out_dir / f"{prefix}_peers.csv", outcomes)
        metrics.export(metrics.categorize_losses(outcomes), "json",
                       spec.out_dir / f"{prefix}_losses.json")
        ttb = metrics.ttb_ratios(outcomes)
        if ttb:
            metrics.export(metrics.cdf(ttb, label=f"{prefix} ttb/min_ttb"),
                           "csv", spec.out_dir / f"{prefix}_ttb_ratio_cdf.csv")
        ttr = metrics.ttr_ratios(outcomes)
        if ttr:
            metrics.export(metrics.cdf(ttr, label=f"{prefix} ttr/min_ttr"),
                           "csv", spec.out_dir / f"{prefix}_ttr_ratio_cdf.csv")
    metrics.export(metrics.redundancy_summary(all_outcomes), "json",
                   spec.out_dir / "redundancy_summary.json")

    manifest = {
        "policy_defaults": {k: getattr(spec.base, k) for k in _POLICY_FIELDS
                            if getattr(spec.base, k) is not None},
        "sweep": {"w": list(spec.w_values), "tau": list(spec.tau_values),
                  "policies": list(spec.policies), "seeds": list(spec.seeds)},
        "traces": {
            "file": str(spec.source.trace_file) if spec.source.trace_file else None,
            "bandwidth_file": (str(spec.source.bandwidth_file)
                               if spec.source.bandwidth_file else None),
            "synthetic": (None if spec.source.synthetic is None else {
                "peer_count": spec.source.synthetic.peer_count,
                "horizon_s": spec.source.synthetic.horizon,
                "mean_session_s": spec.source.synthetic.mean_session,
                "beta_a": spec.source.synthetic.beta_a,
                "beta_b": spec.source.synthetic.beta_b,
                "seed": spec.source.synthetic.seed,
            }),
            "bandwidth_seed": spec.source.bandwidth_seed,
            "peer_seed": spec.source.peer_seed,
            "min_availability": spec.source.min_availability,
        },
        "peer_count_after_filter": len(peers),
        "started_unix": started,
        "elapsed_s": time.time() - started,
    }
    with (spec.out_dir / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return spec.out_dir


def _write_peer_table(path: Path, outcomes) -> None:
    import csv as _csv

    fields = ["seed", "peer_id", "availability", "uplink", "downlink",
              "min_ttb", "min_ttr", "death_time", "ttb", "ttr",
              "n_at_completion", "n_final", "loss_category",
              "unfinished_backup_at_horizon", "unfinished_restore_at_horizon"]
    with path.open("w", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for o in outcomes:
            for p in o.peers:
                writer.writerow([
                    o.seed, p.peer_id, format(p.availability, ".6g"),
                    format(p.uplink, ".6g"), format(p.downlink, ".6g"),
                    "" if p.min_ttb is None else format(p.min_ttb, ".6g"),
                    format(p.min_ttr, ".6g"),
                    "" if p.death_time is None else format(p.death_time, ".6g"),
                    "" if p.ttb is None else format(p.ttb, ".6g"),
                    "" if p.ttr is None else format(p.ttr, ".6g"),
                    p.n_at_completion or "", p.n_final, p.loss_category,
                    int(p.unfinished_backup_at_horizon),
                    int(p.unfinished_restore_at_horizon),
                ])
