"""Shared builders for tests: compact traces, peers, and configs."""

from __future__ import annotations

from p2pbackup.model import (
    MIB,
    AvailabilityTrace,
    PeerProfile,
    PolicyConfig,
    TraceEvent,
)


def trace_from_intervals(intervals, horizon):
    """Build a validated trace online exactly on the given sorted intervals."""
    events = []
    for start, end in intervals:
        if start == 0.0:
            # initially online; the first event is the closing "down"
            if end < horizon:
                events.append(TraceEvent(end, False))
        else:
            events.append(TraceEvent(start, True))
            if end < horizon:
                events.append(TraceEvent(end, False))
    if not events:
        # online over the whole horizon
        events.append(TraceEvent(horizon, False))
    return AvailabilityTrace(events=tuple(events), horizon=horizon)


def always_on(horizon):
    return trace_from_intervals([(0.0, horizon)], horizon)


def make_peer(pid, horizon, uplink=1.0 * MIB, downlink=4.0 * MIB,
              trace=None, capacity=10_000 * MIB):
    trace = trace or always_on(horizon)
    return PeerProfile.from_trace(pid, uplink, downlink, trace, capacity)


def small_config(**overrides):
    """A config whose object splits into few fragments, for fast runs."""
    defaults = dict(object_size=100 * MIB, fragment_size=25 * MIB,
                    capacity=1000 * MIB)
    defaults.update(overrides)
    return PolicyConfig(**defaults)
