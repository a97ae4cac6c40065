"""Aggregation: CDFs, loss tables, redundancy summaries, and exports."""

import csv
import json
import math
import statistics

import jsonschema
import pytest

from p2pbackup.metrics import (
    CdfSeries,
    LossTable,
    RedundancyRow,
    categorize_losses,
    cdf,
    export,
    redundancy_summary,
    ttb_ratios,
    ttr_ratios,
)
from p2pbackup.model import MIB, DAY, WEEK, InvalidArgument
from p2pbackup.simulator import (
    LOSS_INCOMPLETE,
    LOSS_NONE,
    LOSS_UNAVOIDABLE,
    PeerOutcome,
    SimulationOutcome,
)

import importlib.resources

SCHEMA = json.loads(
    importlib.resources.files("p2pbackup.schemas")
    .joinpath("report.schema.json").read_text())


def outcome(policy="adaptive", seed=0, tau=90 * DAY, w=WEEK, k=4,
            horizon=6 * WEEK, peers=()):
    return SimulationOutcome(policy_name=policy, seed=seed, tau=tau, w=w,
                             k=k, horizon=horizon, peers=list(peers),
                             event_log=[])


def peer(pid="p0", **kw):
    defaults = dict(availability=0.5, uplink=1.0 * MIB, downlink=4.0 * MIB,
                    min_ttb=100.0, min_ttr=25.0)
    defaults.update(kw)
    return PeerOutcome(peer_id=pid, **defaults)


# ------------------------------------------------------------------------- CDF

class TestCdf:
    def test_single_value(self):
        assert cdf([5.0]).points == ((5.0, 1.0),)

    def test_duplicate_collapse(self):
        assert cdf([1, 2, 2, 4]).points == ((1, 0.25), (2, 0.75), (4, 1.0))

    def test_median_matches_sort_oracle(self):
        import random
        rng = random.Random(0)
        values = [rng.uniform(0, 100) for _ in range(501)]
        assert cdf(values).median() == statistics.median(values)

    def test_quantiles(self):
        series = cdf([10, 20, 30, 40])
        assert series.quantile(0.25) == 10
        assert series.quantile(0.5) == 20
        assert series.quantile(1.0) == 40

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgument):
            cdf([])

    def test_invalid_series_rejected(self):
        with pytest.raises(InvalidArgument):
            CdfSeries(points=((2.0, 0.5), (1.0, 1.0)))
        with pytest.raises(InvalidArgument):
            CdfSeries(points=((1.0, 0.5), (2.0, 0.4)))
        with pytest.raises(InvalidArgument):
            CdfSeries(points=((1.0, 0.9),))


# ------------------------------------------------------------------ loss tables

class TestLossTable:
    def test_no_deaths_is_all_zero(self):
        o = outcome(peers=[peer("p0", ttb=120.0), peer("p1", ttb=130.0)])
        table = categorize_losses([o])
        assert table.total_pct == 0.0
        assert table.incomplete_pct == table.failed_restore_pct == 0.0
        assert table.crashed_per_run == 0.0

    def test_unavoidable_is_subset_of_incomplete(self):
        peers = [
            peer("p0", death_time=10.0, loss_category=LOSS_UNAVOIDABLE),
            peer("p1", death_time=500.0, loss_category=LOSS_INCOMPLETE),
            peer("p2", ttb=120.0),
            peer("p3", ttb=110.0),
        ]
        table = categorize_losses([outcome(peers=peers)])
        assert table.incomplete_pct == pytest.approx(50.0)
        assert table.unavoidable_pct == pytest.approx(25.0)
        assert table.total_pct == pytest.approx(50.0)
        assert table.crashed_per_run == 2.0
        assert table.total_of_crashed_pct == pytest.approx(100.0)

    def test_averages_over_runs(self):
        run0 = outcome(seed=0, peers=[peer("p0", death_time=1.0,
                                           loss_category=LOSS_UNAVOIDABLE),
                                      peer("p1", ttb=50.0)])
        run1 = outcome(seed=1, peers=[peer("p0", ttb=60.0),
                                      peer("p1", ttb=70.0)])
        table = categorize_losses([run0, run1])
        assert table.runs == 2
        assert table.total_pct == pytest.approx(25.0)

    def test_mixed_configs_rejected(self):
        a = outcome(tau=90 * DAY, peers=[peer()])
        b = outcome(tau=365 * DAY, peers=[peer()])
        with pytest.raises(InvalidArgument):
            categorize_losses([a, b])

    def test_accounting_identity_enforced_by_type(self):
        with pytest.raises(InvalidArgument):
            LossTable(policy_name="adaptive", tau=1.0, w=1.0, runs=1,
                      peers_per_run=4, total_pct=10.0, incomplete_pct=4.0,
                      unavoidable_pct=2.0, failed_restore_pct=2.0,
                      crashed_per_run=1.0, total_of_crashed_pct=50.0,
                      unfinished_backup_pct=0.0)


# --------------------------------------------------------------- ratio serieses

def test_ratio_series_only_cover_defined_completions():
    peers = [peer("p0", ttb=150.0, ttr=30.0),
             peer("p1"),  # no completion
             peer("p2", ttb=200.0)]
    o = outcome(peers=peers)
    assert ttb_ratios([o]) == [1.5, 2.0]
    assert ttr_ratios([o]) == [30.0 / 25.0]
    assert all(r >= 1.0 for r in ttb_ratios([o]) + ttr_ratios([o]))


# ---------------------------------------------------------- redundancy summary

class TestRedundancySummary:
    def test_baseline_constant(self):
        peers = [peer("p0", ttb=1.0, n_at_completion=228),
                 peer("p1", ttb=2.0, n_at_completion=228)]
        rows = redundancy_summary([outcome(policy="baseline", k=64, peers=peers)])
        (row,) = rows
        assert row.mean_r == pytest.approx(3.5625)
        assert row.completed_backups == 2

    def test_groups_sorted_by_w_tau_policy(self):
        outs = [outcome(policy=p, w=w, tau=t,
                        peers=[peer("p0", ttb=1.0, n_at_completion=8)])
                for p in ("baseline", "adaptive")
                for t in (365 * DAY, 90 * DAY)
                for w in (WEEK, 0.0)]
        rows = redundancy_summary(outs)
        keys = [(r.w, r.tau, r.policy_name) for r in rows]
        assert keys == sorted(keys)
        assert all(r.mean_r == pytest.approx(2.0) for r in rows)

    def test_empty_group_reports_nan(self):
        rows = redundancy_summary([outcome(peers=[peer("p0")])])
        assert math.isnan(rows[0].mean_r)


# --------------------------------------------------------------------- exports

class TestExport:
    def _loss(self):
        return categorize_losses([outcome(peers=[
            peer("p0", death_time=1.0, loss_category=LOSS_UNAVOIDABLE),
            peer("p1", ttb=50.0, ttr=26.0, death_time=900.0),
            peer("p2", ttb=60.0),
        ])])

    def test_cdf_csv_round_trip(self, tmp_path):
        series = cdf([1.25, 3.5, 3.5, 10.0], label="demo")
        path = tmp_path / "cdf.csv"
        export(series, "csv", path)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        values = [float(r["value"]) for r in rows]
        fracs = [float(r["fraction"]) for r in rows]
        assert values == [1.25, 3.5, 10.0]
        assert fracs == [0.25, 0.75, 1.0]

    def test_six_significant_digit_contract(self, tmp_path):
        series = cdf([1.2345678901, 2.0])
        path = tmp_path / "cdf.csv"
        export(series, "csv", path)
        body = path.read_text()
        assert "1.23457" in body  # 6 significant digits
        assert "1.2345678" not in body

    def test_json_exports_validate_against_schema(self, tmp_path):
        reports = {
            "cdf.json": cdf([1.0, 2.0], label="x"),
            "loss.json": self._loss(),
            "summary.json": redundancy_summary([outcome(peers=[
                peer("p0", ttb=1.0, n_at_completion=8)])]),
        }
        for name, report in reports.items():
            path = tmp_path / name
            export(report, "json", path)
            payload = json.loads(path.read_text())
            jsonschema.validate(payload, SCHEMA)

    def test_loss_table_csv_headers(self, tmp_path):
        path = tmp_path / "loss.csv"
        export(self._loss(), "csv", path)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        (row,) = rows
        assert float(row["total_pct"]) == pytest.approx(
            float(row["incomplete_backup_pct"]) + float(row["failed_restore_pct"]))

    def test_rejects_unknown_format_and_type(self, tmp_path):
        with pytest.raises(InvalidArgument):
            export(cdf([1.0]), "xml", tmp_path / "x")
        with pytest.raises(InvalidArgument):
            export({"not": "a report"}, "json", tmp_path / "x")

    def test_io_error_names_path(self, tmp_path):
        missing = tmp_path / "no" / "such" / "dir" / "f.json"
        with pytest.raises(OSError, match="f.json"):
            export(cdf([1.0]), "json", missing)
