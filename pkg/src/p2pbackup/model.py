"""Shared domain types and unit conventions.

All times are seconds (non-negative floats), all sizes are bytes.
"GB"/"MB" throughout the project are binary (GiB/MiB), so a 10 GiB object
with 160 MiB fragments yields exactly k = 64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

KIB = 1024
MIB = 1024 * KIB
GIB = 1024 * MIB

MINUTE = 60.0
HOUR = 3600.0
DAY = 86400.0
WEEK = 7 * DAY
YEAR = 365 * DAY


class InvalidArgument(ValueError):
    """A value violated a documented precondition."""


class TraceError(ValueError):
    """An availability trace violated its structural invariants."""


def _check_finite_nonneg(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise InvalidArgument(f"{name} must be finite and >= 0, got {value!r}")


class TraceEvent(NamedTuple):
    time: float
    up: bool


@dataclass(frozen=True)
class AvailabilityTrace:
    """Ordered up/down transitions for one peer over a finite horizon.

    Before the first event the peer is in the opposite state of that
    event's kind, so a trace starting with DOWN at t=5 was online on [0, 5).
    """

    events: tuple[TraceEvent, ...]
    horizon: float

    def __post_init__(self):
        if not math.isfinite(self.horizon) or self.horizon <= 0:
            raise TraceError(f"horizon must be finite and > 0, got {self.horizon!r}")
        if not self.events:
            raise TraceError("trace needs at least one event")
        prev_t = -math.inf
        prev_up = None
        for ev in self.events:
            if not math.isfinite(ev.time) or ev.time < 0:
                raise TraceError(f"event time must be finite and >= 0, got {ev.time!r}")
            if ev.time <= prev_t:
                raise TraceError(f"event times must strictly increase ({prev_t} -> {ev.time})")
            if prev_up is not None and ev.up == prev_up:
                raise TraceError(f"events must alternate up/down at t={ev.time}")
            if ev.time > self.horizon:
                raise TraceError(f"event at t={ev.time} beyond horizon {self.horizon}")
            prev_t = ev.time
            prev_up = ev.up

    @property
    def initial_up(self) -> bool:
        return not self.events[0].up

    def online_intervals(self) -> list[tuple[float, float]]:
        """Closed-open [start, end) online intervals, clipped to the horizon."""
        intervals = []
        up_since = 0.0 if self.initial_up else None
        for ev in self.events:
            if ev.up:
                up_since = ev.time
            elif up_since is not None:
                intervals.append((up_since, ev.time))
                up_since = None
        if up_since is not None:
            intervals.append((up_since, self.horizon))
        return intervals

    def availability(self) -> float:
        return sum(e - s for s, e in self.online_intervals()) / self.horizon

    def is_online(self, t: float) -> bool:
        state = self.initial_up
        for ev in self.events:
            if ev.time > t:
                break
            state = ev.up
        return state


@dataclass(frozen=True)
class PeerProfile:
    """A peer's static capacities plus its availability behavior."""

    id: str
    uplink: float  # bytes/s
    downlink: float  # bytes/s
    trace: AvailabilityTrace
    availability: float
    capacity: float  # bytes of storage offered to others

    def __post_init__(self):
        if self.uplink <= 0 or self.downlink <= 0:
            raise InvalidArgument(f"peer {self.id}: uplink/downlink must be > 0")
        _check_finite_nonneg("capacity", self.capacity)
        if not 0 < self.availability <= 1:
            raise InvalidArgument(
                f"peer {self.id}: availability must be in (0, 1], got {self.availability}"
            )

    @classmethod
    def from_trace(cls, id: str, uplink: float, downlink: float,
                   trace: AvailabilityTrace, capacity: float) -> "PeerProfile":
        return cls(id=id, uplink=uplink, downlink=downlink, trace=trace,
                   availability=trace.availability(), capacity=capacity)


def derive_k(object_size: float, fragment_size: float) -> int:
    """Number of fragments needed to reconstruct an object under optimal coding."""
    if object_size <= 0 or fragment_size <= 0:
        raise InvalidArgument("object_size and fragment_size must be > 0")
    return math.ceil(object_size / fragment_size)


def redundancy_factor(n: int, k: int) -> float:
    """Storage overhead multiplier n/k for n placed fragments."""
    if k < 1 or n < k:
        raise InvalidArgument(f"need n >= k >= 1, got n={n}, k={k}")
    return n / k


@dataclass(frozen=True)
class PolicyConfig:
    """All redundancy-policy and simulation parameters.

    Defaults reproduce the reference experimental settings: 10 GiB objects,
    160 MiB fragments, sigma1 = 0.9999, a 1-day floor on the restore-time
    threshold, 50 GiB of storage per peer.
    """

    object_size: float = 10 * GIB
    fragment_size: float = 160 * MIB
    tau: float = YEAR  # mean peer lifetime; math.inf disables deaths
    w: float = 2 * WEEK  # detection window
    sigma1: float = 0.9999
    alpha: float = 2.0
    sigma2_floor: float = DAY
    baseline_target_availability: float = 0.99
    baseline_mean_availability: float = 0.36
    capacity: float = 50 * GIB
    maintenance_timeout: float | None = None  # defaults to w

    def __post_init__(self):
        if self.object_size <= 0 or self.fragment_size <= 0:
            raise InvalidArgument("object_size and fragment_size must be > 0")
        if not 0 < self.sigma1 < 1:
            raise InvalidArgument(f"sigma1 must be in (0, 1), got {self.sigma1}")
        if not (self.tau > 0):
            raise InvalidArgument(f"tau must be > 0, got {self.tau}")
        if self.w < 0 or not math.isfinite(self.w):
            raise InvalidArgument(f"w must be finite and >= 0, got {self.w}")
        if self.alpha < 1:
            raise InvalidArgument(f"alpha must be >= 1, got {self.alpha}")
        if self.sigma2_floor < 0:
            raise InvalidArgument("sigma2_floor must be >= 0")
        if not 0 < self.baseline_target_availability < 1:
            raise InvalidArgument("baseline_target_availability must be in (0, 1)")
        if not 0 < self.baseline_mean_availability < 1:
            raise InvalidArgument("baseline_mean_availability must be in (0, 1)")
        if self.capacity < 0:
            raise InvalidArgument("capacity must be >= 0")

    @property
    def k(self) -> int:
        return derive_k(self.object_size, self.fragment_size)

    @property
    def timeout(self) -> float:
        """Offline duration after which a holder is declared lost (defaults to w)."""
        return self.w if self.maintenance_timeout is None else self.maintenance_timeout


@dataclass
class PlacementState:
    """Which live peers hold fragments of one owner's backup object.

    n and the redundancy factor are always derived from the holder map,
    never stored independently.
    """

    owner: str
    holders: dict[str, int] = field(default_factory=dict)  # peer id -> fragments held
    backup_complete: bool = False
    completed_at: float | None = None

    @property
    def n(self) -> int:
        return sum(self.holders.values())

    def add_fragment(self, peer_id: str) -> None:
        if peer_id == self.owner:
            raise InvalidArgument(f"owner {self.owner} cannot hold its own fragments")
        self.holders[peer_id] = self.holders.get(peer_id, 0) + 1

    def drop_holder(self, peer_id: str) -> int:
        """Remove a holder entirely, returning how many fragments it held."""
        return self.holders.pop(peer_id, 0)
