"""Trace ingestion, filtering, bandwidth sampling, and synthetic generation.

Trace files are CSV with header ``peer_id,time_s,event`` (event in
{up, down}); bandwidth files hold one uplink value (bytes/s) per line.
The synthetic generator replaces the original (non-public) availability
trace with per-peer alternating exponential ON/OFF sessions whose targets
are drawn from a Beta distribution shaped so that the median availability
sits near 0.3 with a small mass of nearly always-on peers.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from typing import Iterable, TextIO

from .model import (
    KIB,
    HOUR,
    AvailabilityTrace,
    InvalidArgument,
    PeerProfile,
    TraceEvent,
)

DEFAULT_MIN_AVAILABILITY = 4.0 / 24.0  # at least four hours per day online

# Published summary statistics of the measured uplink distribution.
BANDWIDTH_MEDIAN = 77 * KIB
BANDWIDTH_MEAN = 428 * KIB
DOWNLINK_FACTOR = 4.0


class TraceParseError(ValueError):
    """A trace row violated the format; message names the peer and row."""


def parse_traces(stream: Iterable[str] | TextIO, horizon: float) -> dict[str, AvailabilityTrace]:
    """Parse a trace CSV into one validated AvailabilityTrace per peer.

    Rows at or beyond the horizon are truncated. Peers keep file order.
    """
    raw: dict[str, list[TraceEvent]] = {}
    reader = csv.reader(stream)
    for row_no, row in enumerate(reader, start=1):
        if not row or (row_no == 1 and row[0].strip() == "peer_id"):
            continue
        if len(row) != 3:
            raise TraceParseError(f"row {row_no}: expected 3 columns, got {len(row)}")
        peer_id, time_s, event = (c.strip() for c in row)
        try:
            t = float(time_s)
        except ValueError:
            raise TraceParseError(f"peer {peer_id} row {row_no}: bad time {time_s!r}") from None
        if event not in ("up", "down"):
            raise TraceParseError(f"peer {peer_id} row {row_no}: unknown event {event!r}")
        events = raw.setdefault(peer_id, [])
        if events and t <= events[-1].time:
            raise TraceParseError(
                f"peer {peer_id} row {row_no}: time {t} not after {events[-1].time}"
            )
        up = event == "up"
        if events and events[-1].up == up:
            raise TraceParseError(f"peer {peer_id} row {row_no}: repeated {event!r} event")
        if t <= horizon:
            events.append(TraceEvent(t, up))
    out = {}
    for peer_id, events in raw.items():
        if not events:
            raise TraceParseError(f"peer {peer_id}: no events within horizon")
        out[peer_id] = AvailabilityTrace(events=tuple(events), horizon=horizon)
    return out


def write_traces(traces: dict[str, AvailabilityTrace], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["peer_id", "time_s", "event"])
    for peer_id, trace in traces.items():
        for ev in trace.events:
            writer.writerow([peer_id, f"{ev.time:g}", "up" if ev.up else "down"])


def filter_min_availability(traces: dict[str, AvailabilityTrace],
                            min_fraction: float = DEFAULT_MIN_AVAILABILITY
                            ) -> dict[str, AvailabilityTrace]:
    """Keep only peers online at least the given fraction of the horizon."""
    if not 0 <= min_fraction <= 1:
        raise InvalidArgument(f"min_fraction must be in [0, 1], got {min_fraction}")
    return {pid: tr for pid, tr in traces.items() if tr.availability() >= min_fraction}


@dataclass(frozen=True)
class BandwidthDistribution:
    """Empirical uplink sample list drawn from with replacement."""

    samples: tuple[float, ...]

    def __post_init__(self):
        if not self.samples:
            raise InvalidArgument("bandwidth distribution needs at least one sample")
        if any(s <= 0 for s in self.samples):
            raise InvalidArgument("bandwidth samples must be > 0")

    @classmethod
    def from_csv(cls, stream: Iterable[str]) -> "BandwidthDistribution":
        samples = []
        for line in stream:
            line = line.strip()
            if line:
                samples.append(float(line))
        return cls(samples=tuple(samples))

    @classmethod
    def synthetic_lognormal(cls, seed: int, size: int = 10_000,
                            median: float = BANDWIDTH_MEDIAN,
                            mean: float = BANDWIDTH_MEAN) -> "BandwidthDistribution":
        """Skewed synthetic uplinks calibrated to the published median and mean."""
        if mean <= median:
            raise InvalidArgument("mean must exceed median for a lognormal")
        mu = math.log(median)
        sigma = math.sqrt(2.0 * (math.log(mean) - mu))
        rng = random.Random(seed)
        return cls(samples=tuple(rng.lognormvariate(mu, sigma) for _ in range(size)))


def sample_peer_bandwidth(dist: BandwidthDistribution,
                          rng: random.Random) -> tuple[float, float]:
    """Draw an uplink uniformly from the samples; downlink is four times it."""
    uplink = dist.samples[rng.randrange(len(dist.samples))]
    return uplink, DOWNLINK_FACTOR * uplink


@dataclass(frozen=True)
class SyntheticTraceParams:
    peer_count: int
    horizon: float
    mean_session: float = 8 * HOUR
    beta_a: float = 1.6
    beta_b: float = 3.2
    seed: int = 0
    min_target: float = 0.05

    def __post_init__(self):
        if self.peer_count < 1:
            raise InvalidArgument("peer_count must be >= 1")
        if self.horizon <= 0 or self.mean_session <= 0:
            raise InvalidArgument("horizon and mean_session must be > 0")
        if not 0 < self.min_target <= 1:
            raise InvalidArgument("min_target must be in (0, 1]")


def _one_synthetic_trace(rng: random.Random, target: float, horizon: float,
                         mean_session: float) -> AvailabilityTrace:
    if target >= 1.0:
        return AvailabilityTrace(events=(TraceEvent(0.0, True),), horizon=horizon)
    on_mean = mean_session
    off_mean = mean_session * (1.0 - target) / target
    events: list[TraceEvent] = []
    online = rng.random() < target  # stationary initial state
    t = 0.0
    if online:
        events.append(TraceEvent(0.0, True))
        t += rng.expovariate(1.0 / on_mean)
        online_next = False
    else:
        online_next = True
        t += rng.expovariate(1.0 / off_mean)
    while t < horizon:
        events.append(TraceEvent(t, online_next))
        t += rng.expovariate(1.0 / (on_mean if online_next else off_mean))
        online_next = not online_next
    if not events:
        # never came online within the horizon; pin a vanishing session at the end
        events = [TraceEvent(horizon * 0.999, True), TraceEvent(horizon * 0.9995, False)]
    return AvailabilityTrace(events=tuple(events), horizon=horizon)


def generate_synthetic_traces(params: SyntheticTraceParams) -> dict[str, AvailabilityTrace]:
    """Deterministic (per seed) population of exponential ON/OFF traces.

    Each peer gets a target availability drawn from Beta(beta_a, beta_b),
    floored at min_target; session means are chosen so the long-run ON
    fraction matches the target.
    """
    rng = random.Random(params.seed)
    out = {}
    width = len(str(params.peer_count - 1))
    for i in range(params.peer_count):
        target = max(params.min_target, min(1.0, rng.betavariate(params.beta_a, params.beta_b)))
        out[f"peer{i:0{width}d}"] = _one_synthetic_trace(
            rng, target, params.horizon, params.mean_session
        )
    return out


def build_peers(traces: dict[str, AvailabilityTrace], dist: BandwidthDistribution,
                capacity: float, seed: int) -> list[PeerProfile]:
    """Attach sampled bandwidth and capacity to traces, yielding peer profiles."""
    rng = random.Random(seed)
    peers = []
    for peer_id, trace in traces.items():
        uplink, downlink = sample_peer_bandwidth(dist, rng)
        peers.append(PeerProfile.from_trace(peer_id, uplink, downlink, trace, capacity))
    return peers
