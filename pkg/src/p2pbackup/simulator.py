"""Trace-driven discrete-event simulation of backup, maintenance and restore.

One run is strictly single-threaded and deterministic given (config, policy,
peers, seed). Peers churn according to their traces, die at exponentially
distributed times, and move data over access links shared max-min fairly.

Modeling choices worth knowing about:

* Placement is near-sequential per owner: at most ``max_parallel_uploads``
  uploads are actively moving at a time (interrupted ones waiting for a
  reconnect do not block new placements). Aggregate backup speed is
  governed by the owner's uplink either way, and single-flow sources keep
  bandwidth reallocation local to small link groups.
* Holder-loss detection is driven by actual deaths: a holder is flagged
  lost ``timeout`` seconds after it permanently disconnects. Transiently
  offline peers are never falsely flagged; the membership oracle is assumed
  to discern churn from death.
* Each fragment goes to a distinct holder whenever a fresh candidate
  exists; when the pool is exhausted (tiny populations) a holder may
  receive additional fragments rather than stalling forever.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

from . import policy as pol
from .allocation import audit_conservation, max_min_rates
from .model import InvalidArgument, PeerProfile, PlacementState, PolicyConfig

# Event kind priorities; at equal timestamps failures are processed first.
DEATH = 0
PEER_DOWN = 1
PEER_UP = 2
TRANSFER_COMPLETE = 3
TIMEOUT_EXPIRED = 4
HORIZON_END = 5

KIND_NAMES = {
    DEATH: "death",
    PEER_DOWN: "peer_down",
    PEER_UP: "peer_up",
    TRANSFER_COMPLETE: "transfer_complete",
    TIMEOUT_EXPIRED: "timeout_expired",
    HORIZON_END: "horizon_end",
}

# Loss categories. "incomplete_unavoidable" refines "incomplete_backup":
# the owner died before even an ideal system could have finished.
LOSS_NONE = "none"
LOSS_INCOMPLETE = "incomplete_backup"
LOSS_UNAVOIDABLE = "incomplete_unavoidable"
LOSS_FAILED_RESTORE = "failed_restore"

# Bytes left below which a transfer counts as finished. Fragments are
# hundreds of MiB, so this only absorbs floating-point residue from the
# incremental remaining -= rate * dt bookkeeping.
_DONE_EPS = 1e-6


@dataclass(frozen=True)
class AdaptivePolicy:
    """Place fragments until durability and estimated restore time pass."""

    n_cap_factor: int = 10

    name = "adaptive"


@dataclass(frozen=True)
class BaselinePolicy:
    """Place a fixed, system-wide fragment count."""

    n_fixed: int

    name = "baseline"


def min_ttb(trace, start: float, object_size: float, uplink: float) -> float | None:
    """Wall-clock time to accumulate o/u seconds online, walking the trace.

    Returns None when the trace runs out of online time before the horizon.
    """
    need = object_size / uplink
    acc = 0.0
    for s, e in trace.online_intervals():
        s = max(s, start)
        if e <= s:
            continue
        if acc + (e - s) >= need:
            return (s + (need - acc)) - start
        acc += e - s
    return None


def min_ttr(object_size: float, downlink: float) -> float:
    """Ideal restore time o/d; the restoring peer stays online throughout."""
    return object_size / downlink


def draw_death_times(peers: Sequence[PeerProfile], tau: float,
                     rng: random.Random) -> dict[str, float]:
    """Independent exponential lifetime draws, one per peer, mean tau."""
    if not tau > 0:
        raise InvalidArgument(f"tau must be > 0, got {tau}")
    if math.isinf(tau):
        return {p.id: math.inf for p in peers}
    return {p.id: rng.expovariate(1.0 / tau) for p in peers}


def uniform_eligible(rng: random.Random, pool: Sequence[str],
                     is_eligible: Callable[[str], bool],
                     max_tries: int = 12) -> str | None:
    """Uniform draw over the eligible subset of pool.

    Rejection sampling with a bounded number of tries, then an exact
    fallback over the filtered pool; both paths are uniform over eligibles.
    """
    if not pool:
        return None
    for _ in range(max_tries):
        cand = pool[rng.randrange(len(pool))]
        if is_eligible(cand):
            return cand
    eligible = [c for c in pool if is_eligible(c)]
    if not eligible:
        return None
    return eligible[rng.randrange(len(eligible))]


@dataclass
class Transfer:
    tid: int
    src: str
    dst: str
    owner: str
    kind: str  # "upload" (backup/repair) or "restore"
    remaining: float
    rate: float = 0.0
    last_update: float = 0.0
    epoch: int = 0
    active: bool = False
    # earliest outstanding TRANSFER_COMPLETE event time; math.inf when none.
    # Rate drops leave the old (now too-early) event in place: it fires,
    # finds the transfer unfinished, and reschedules itself once. Only rate
    # rises push a fresh, earlier event. This keeps the heap near-minimal.
    deadline: float = math.inf


@dataclass
class PeerOutcome:
    peer_id: str
    availability: float
    uplink: float
    downlink: float
    min_ttb: float | None
    min_ttr: float
    death_time: float | None = None
    backup_completed_at: float | None = None
    ttb: float | None = None
    n_at_completion: int | None = None
    completion_durability: float | None = None
    completion_ettr: float | None = None
    completion_sigma2: float | None = None
    restore_started_at: float | None = None
    restore_completed_at: float | None = None
    ttr: float | None = None
    loss_category: str = LOSS_NONE
    unfinished_backup_at_horizon: bool = False
    unfinished_restore_at_horizon: bool = False
    n_final: int = 0
    cap_warning: bool = False


@dataclass
class SimulationOutcome:
    policy_name: str
    seed: int
    tau: float
    w: float
    k: int
    horizon: float
    peers: list[PeerOutcome]
    event_log: list[tuple]
    cap_warning_count: int = 0
    realloc_count: int = 0

    def mean_redundancy(self) -> float | None:
        rs = [p.n_at_completion / self.k for p in self.peers if p.n_at_completion]
        return sum(rs) / len(rs) if rs else None

    def write_event_log(self, stream) -> None:
        for entry in self.event_log:
            stream.write(" ".join(str(x) for x in entry) + "\n")


class _PeerState:
    __slots__ = (
        "profile", "online", "trace_online", "crashed", "gone", "restoring",
        "death_time", "flag_time", "stored", "doomed_owners",
        "committed_frags", "placement",
        "placement_version", "satisfied_version", "upload_inflight",
        "restore_got", "restore_fetch_left", "out_all", "in_all",
        "out_active", "in_active", "outcome",
    )

    def __init__(self, profile: PeerProfile, outcome: PeerOutcome):
        self.profile = profile
        self.online = False
        self.trace_online = False
        self.crashed = False
        self.gone = False
        self.restoring = False
        self.death_time: float | None = None
        self.flag_time: float | None = None
        self.stored: dict[tuple[str, int], None] = {}
        self.doomed_owners: tuple[str, ...] = ()  # owners of fragments lost at death
        self.committed_frags = 0  # stored plus inbound in-flight fragments
        self.placement = PlacementState(owner=profile.id)
        self.placement_version = 0
        self.satisfied_version = -1
        self.upload_inflight = 0  # all in-flight uploads, active or paused
        self.restore_got = 0
        self.restore_fetch_left: dict[str, int] = {}
        self.out_all: dict[int, Transfer] = {}
        self.in_all: dict[int, Transfer] = {}
        self.out_active: dict[int, Transfer] = {}
        self.in_active: dict[int, Transfer] = {}
        self.outcome = outcome

    @property
    def alive(self) -> bool:
        return not self.crashed

    def active_uploads(self) -> int:
        return sum(1 for t in self.out_active.values() if t.kind == "upload")

    def active_restore_fetches(self) -> int:
        return sum(1 for t in self.in_active.values() if t.kind == "restore")


class Simulation:
    """One deterministic run over a fixed peer population."""

    def __init__(self, config: PolicyConfig, policy, peers: Sequence[PeerProfile],
                 seed: int, audit: bool = True, keep_event_log: bool = True,
                 max_parallel_uploads: int = 2,
                 realloc_radius: int | None = 0):
        if len(peers) < 1:
            raise InvalidArgument("need at least one peer")
        horizons = {p.trace.horizon for p in peers}
        if len(horizons) != 1:
            raise InvalidArgument("all traces must share one horizon")
        ids = [p.id for p in peers]
        if len(set(ids)) != len(ids):
            raise InvalidArgument("duplicate peer ids")
        self.config = config
        self.policy = policy
        self.horizon = peers[0].trace.horizon
        self.seed = seed
        self.audit = audit
        self.keep_event_log = keep_event_log
        self.max_parallel = max_parallel_uploads
        self.realloc_radius = realloc_radius
        self.k = config.k
        self.frag_size = config.fragment_size
        self.cap_frags = int(config.capacity // config.fragment_size)
        seq = random.Random(seed)
        self.rng_death = random.Random(seq.getrandbits(64))
        self.rng_select = random.Random(seq.getrandbits(64))

        self.states: dict[str, _PeerState] = {}
        for p in peers:
            outcome = PeerOutcome(
                peer_id=p.id, availability=p.availability, uplink=p.uplink,
                downlink=p.downlink,
                min_ttb=min_ttb(p.trace, 0.0, config.object_size, p.uplink),
                min_ttr=min_ttr(config.object_size, p.downlink),
            )
            self.states[p.id] = _PeerState(p, outcome)

        self.transfers: dict[int, Transfer] = {}
        self._tid = itertools.count()
        self._seq = itertools.count()
        self.heap: list = []
        self.now = 0.0
        self.event_log: list[tuple] = []
        self.stalled_owners: dict[str, None] = {}
        self._extra_dirty: set[str] = set()
        self.active_restorers: dict[str, None] = {}
        self.cap_warning_count = 0
        self.realloc_count = 0
        # online peers as an indexable swap-remove list for O(1) sampling
        self._online_list: list[str] = []
        self._online_pos: dict[str, int] = {}

    # ---------------------------------------------------------------- events

    def _push(self, time: float, kind: int, subj) -> None:
        heapq.heappush(self.heap, (time, kind, subj, next(self._seq)))

    def _log(self, time: float, kind: int, subj) -> None:
        if self.keep_event_log:
            self.event_log.append((time, KIND_NAMES[kind], subj))

    # ------------------------------------------------------------ online set

    def _online_add(self, pid: str) -> None:
        if pid not in self._online_pos:
            self._online_pos[pid] = len(self._online_list)
            self._online_list.append(pid)

    def _online_remove(self, pid: str) -> None:
        pos = self._online_pos.pop(pid, None)
        if pos is None:
            return
        last = self._online_list.pop()
        if last != pid:
            self._online_list[pos] = last
            self._online_pos[last] = pos

    # ---------------------------------------------------------------- setup

    def _setup(self) -> None:
        cfg = self.config
        deaths = draw_death_times([s.profile for s in self.states.values()],
                                  cfg.tau, self.rng_death)
        for pid, ps in self.states.items():
            dt = deaths[pid]
            if dt <= self.horizon:
                ps.death_time = dt
                ps.outcome.death_time = dt
                self._push(dt, DEATH, pid)
            trace = ps.profile.trace
            ps.trace_online = ps.online = trace.initial_up
            if ps.online:
                self._online_add(pid)
            for ev in trace.events:
                self._push(ev.time, PEER_UP if ev.up else PEER_DOWN, pid)
        self._push(self.horizon, HORIZON_END, "")

    # ------------------------------------------------------------------ run

    def run(self) -> SimulationOutcome:
        self._setup()
        # every peer starts its backup at t = 0
        for pid in self.states:
            self._service_owner(self.states[pid])
        self._realloc(set(self.states), 0.0)
        while self.heap:
            time, kind, subj, _ = heapq.heappop(self.heap)
            self.now = time
            if kind == HORIZON_END:
                self._log(time, kind, subj)
                break
            if kind == DEATH:
                self._log(time, kind, subj)
                self._on_death(subj)
            elif kind == PEER_DOWN:
                if self._on_peer_down(subj):
                    self._log(time, kind, subj)
            elif kind == PEER_UP:
                if self._on_peer_up(subj):
                    self._log(time, kind, subj)
            elif kind == TRANSFER_COMPLETE:
                self._on_transfer_complete(subj)
            elif kind == TIMEOUT_EXPIRED:
                self._log(time, kind, subj)
                self._on_timeout(subj)
        self._finalize()
        return SimulationOutcome(
            policy_name=self.policy.name, seed=self.seed, tau=self.config.tau,
            w=self.config.w, k=self.k, horizon=self.horizon,
            peers=[self.states[pid].outcome for pid in self.states],
            event_log=self.event_log,
            cap_warning_count=self.cap_warning_count,
            realloc_count=self.realloc_count,
        )

    # --------------------------------------------------------- event handlers

    def _on_death(self, pid: str) -> None:
        ps = self.states[pid]
        ps.crashed = True
        last_down = self.now if ps.online else self._last_down_before(ps, self.now)
        ps.flag_time = max(self.now, last_down + self.config.timeout)
        self._push(ps.flag_time, TIMEOUT_EXPIRED, pid)
        if ps.online:
            ps.online = False
            ps.trace_online = False
            self._online_remove(pid)
        # stored fragments are physically destroyed now; their owners only
        # notice (and repair) once the loss-detection timeout fires
        ps.doomed_owners = tuple(sorted({owner for owner, _ in ps.stored}))
        ps.stored.clear()
        dirty: set[str] = {pid}
        # outbound transfers vanish with the peer
        for t in list(ps.out_all.values()):
            self._cancel_transfer(t, dirty)
            if t.kind == "restore":
                self._restore_recheck(self.states[t.dst], dirty)
        # inbound uploads headed here must be re-placed elsewhere
        for t in list(ps.in_all.values()):
            self._cancel_transfer(t, dirty)
            if t.kind == "upload":
                owner = self.states[t.owner]
                self._service_owner(owner)
                dirty.add(t.owner)
        ps.committed_frags = 0
        if ps.placement.backup_complete:
            self._start_restore(ps, dirty)
        else:
            out = ps.outcome
            if out.min_ttb is None or self.now < out.min_ttb:
                out.loss_category = LOSS_UNAVOIDABLE
            else:
                out.loss_category = LOSS_INCOMPLETE
            ps.gone = True
        self._realloc(dirty, self.now)

    def _last_down_before(self, ps: _PeerState, t: float) -> float:
        last = 0.0
        for ev in ps.profile.trace.events:
            if ev.time > t:
                break
            if not ev.up:
                last = ev.time
        return last

    def _on_peer_down(self, pid: str) -> bool:
        ps = self.states[pid]
        if ps.gone or (ps.crashed and not ps.restoring):
            return False
        ps.trace_online = False
        if ps.restoring:
            return True  # forced online during restore
        ps.online = False
        self._online_remove(pid)
        dirty = {pid}
        for t in list(ps.out_active.values()):
            self._pause_transfer(t, dirty)
        paused_owners = []
        for t in list(ps.in_active.values()):
            self._pause_transfer(t, dirty)
            if t.kind == "upload":
                paused_owners.append(t.owner)
        # owners whose upload just stalled may start another fragment elsewhere
        for owner_id in paused_owners:
            self._service_owner(self.states[owner_id])
            dirty.add(owner_id)
        self._realloc(dirty, self.now)
        return True

    def _on_peer_up(self, pid: str) -> bool:
        ps = self.states[pid]
        if ps.gone or (ps.crashed and not ps.restoring):
            return False
        ps.trace_online = True
        if ps.restoring:
            return True
        ps.online = True
        self._online_add(pid)
        dirty = {pid}
        for t in list(ps.out_all.values()):
            self._maybe_resume(t, dirty)
        for t in list(ps.in_all.values()):
            self._maybe_resume(t, dirty)
        self._service_owner(ps)
        if self.stalled_owners:
            for owner_id in list(self.stalled_owners):
                self.stalled_owners.pop(owner_id, None)
                self._service_owner(self.states[owner_id])
                dirty.add(owner_id)
        for rid in list(self.active_restorers):
            self._service_restore(self.states[rid], dirty)
        self._realloc(dirty, self.now)
        return True

    def _on_transfer_complete(self, subj) -> None:
        tid, epoch = subj
        t = self.transfers.get(tid)
        if t is None or not t.active or t.epoch != epoch:
            return
        self._advance(t)
        if t.remaining > _DONE_EPS:
            # fired early: the rate dropped after this event was scheduled.
            # Reschedule at the true finish time under the current rate.
            t.deadline = math.inf
            if t.rate <= 0:
                return  # stalled; the next rate change reschedules it
            finish = self.now + t.remaining / t.rate
            if finish > self.now:
                t.deadline = finish
                self._push(finish, TRANSFER_COMPLETE, (tid, t.epoch))
                return
            # the residue drains within one float ulp of now: finish here
        self._log(self.now, TRANSFER_COMPLETE, (tid, t.src, t.dst))
        t.remaining = 0.0
        dirty = {t.src, t.dst}
        self._remove_transfer(t)
        if t.kind == "upload":
            self._finish_upload(t, dirty)
        else:
            self._finish_restore_fetch(t, dirty)
        self._realloc(dirty, self.now)

    def _on_timeout(self, pid: str) -> None:
        """A dead holder's loss is detected; owners drop it and repair.

        The fragments themselves vanished at the death event; only the
        owners' bookkeeping (and any post-recovery state of the peer) lives
        here, so fragments received after a successful restore are untouched.
        """
        ps = self.states[pid]
        dirty: set[str] = set()
        owners = ps.doomed_owners
        ps.doomed_owners = ()
        for owner_id in owners:
            owner = self.states[owner_id]
            if owner.placement.drop_holder(pid):
                owner.placement_version += 1
            if owner.gone:
                continue
            if owner.restoring:
                owner.restore_fetch_left.pop(pid, None)
                self._restore_recheck(owner, dirty)
            elif owner.alive and owner.online:
                self._service_owner(owner)
                dirty.add(owner_id)
            # offline owners re-check their placement on their next PEER_UP
        if dirty or self._extra_dirty:
            self._realloc(dirty, self.now)

    # ----------------------------------------------------------- transfers

    def _new_transfer(self, src: str, dst: str, owner: str, kind: str,
                      size: float) -> Transfer:
        t = Transfer(tid=next(self._tid), src=src, dst=dst, owner=owner,
                     kind=kind, remaining=size, last_update=self.now)
        self.transfers[t.tid] = t
        self.states[src].out_all[t.tid] = t
        self.states[dst].in_all[t.tid] = t
        if self.states[src].online and self.states[dst].online:
            self._activate(t)
        return t

    def _activate(self, t: Transfer) -> None:
        t.active = True
        t.last_update = self.now
        self.states[t.src].out_active[t.tid] = t
        self.states[t.dst].in_active[t.tid] = t

    def _deactivate(self, t: Transfer) -> None:
        if t.active:
            self._advance(t)
            t.active = False
            t.epoch += 1
            t.deadline = math.inf
            self.states[t.src].out_active.pop(t.tid, None)
            self.states[t.dst].in_active.pop(t.tid, None)

    def _advance(self, t: Transfer) -> None:
        if t.active and t.rate > 0:
            t.remaining = max(0.0, t.remaining - t.rate * (self.now - t.last_update))
        t.last_update = self.now

    def _pause_transfer(self, t: Transfer, dirty: set[str]) -> None:
        self._deactivate(t)
        dirty.add(t.src)
        dirty.add(t.dst)

    def _maybe_resume(self, t: Transfer, dirty: set[str]) -> None:
        if t.active:
            return
        src, dst = self.states[t.src], self.states[t.dst]
        if not (src.online and dst.online):
            return
        if t.kind == "upload" and src.active_uploads() >= self.max_parallel:
            return  # the owner's upload slot is busy; stays paused for now
        self._activate(t)
        dirty.add(t.src)
        dirty.add(t.dst)

    def _remove_transfer(self, t: Transfer) -> None:
        if t.active:
            t.active = False
            t.epoch += 1
            t.deadline = math.inf
            self.states[t.src].out_active.pop(t.tid, None)
            self.states[t.dst].in_active.pop(t.tid, None)
        self.states[t.src].out_all.pop(t.tid, None)
        self.states[t.dst].in_all.pop(t.tid, None)
        self.transfers.pop(t.tid, None)
        if t.kind == "upload":
            self.states[t.owner].upload_inflight -= 1

    def _cancel_transfer(self, t: Transfer, dirty: set[str]) -> None:
        self._remove_transfer(t)
        if t.kind == "upload":
            # reserved capacity at the destination is released
            self.states[t.dst].committed_frags -= 1
        dirty.add(t.src)
        dirty.add(t.dst)

    # --------------------------------------------------------------- backup

    def _holder_rates(self, placement: PlacementState) -> list[pol.HolderRate]:
        rates = []
        for hid, count in placement.holders.items():
            prof = self.states[hid].profile
            mu = pol.expected_upload_rate(prof.uplink, prof.availability)
            for _ in range(count):
                rates.append(pol.HolderRate(peer_id=hid, expected_upload_rate=mu))
        return rates

    def _assess(self, ps: _PeerState):
        cfg = self.config
        assessment, ettr = pol.adaptive_assessment(
            object_size=cfg.object_size, k=self.k, tau=cfg.tau, w=cfg.w,
            holders=self._holder_rates(ps.placement),
            owner_downlink=ps.profile.downlink,
        )
        s2 = pol.sigma2(ps.outcome.min_ttr, cfg.alpha, cfg.sigma2_floor)
        return assessment, ettr, s2

    def _mark_backup_complete(self, ps: _PeerState, assessment=None, ettr=None,
                              s2=None) -> None:
        pl = ps.placement
        pl.backup_complete = True
        pl.completed_at = self.now
        out = ps.outcome
        out.backup_completed_at = self.now
        out.ttb = self.now
        out.n_at_completion = pl.n
        if assessment is not None:
            out.completion_durability = assessment.durability
            out.completion_ettr = ettr
            out.completion_sigma2 = s2
        # uploads still in flight are no longer needed; free their reservations
        for t in list(ps.out_all.values()):
            if t.kind == "upload":
                self._cancel_transfer(t, self._extra_dirty)

    def _needs_more_fragments(self, ps: _PeerState) -> bool:
        """Whether the owner should start another fragment upload now.

        Paused uploads (their target is temporarily offline) do not count
        toward the goal: the owner keeps placing on reachable peers and the
        paused ones become surplus, cancelled at completion. Without this a
        backup's tail would wait out the offline period of every straggler.
        """
        pl = ps.placement
        current = pl.n + ps.active_uploads()
        if isinstance(self.policy, BaselinePolicy):
            if not pl.backup_complete and pl.n >= self.policy.n_fixed:
                self._mark_backup_complete(ps)
            return current < self.policy.n_fixed
        # adaptive
        if pl.backup_complete and ps.satisfied_version == ps.placement_version:
            return False
        if pl.n < self.k:
            return True
        assessment, ettr, s2 = self._assess(ps)
        cfg = self.config
        if pol.stop_condition(assessment, ettr, cfg.sigma1, s2):
            if not pl.backup_complete:
                self._mark_backup_complete(ps, assessment, ettr, s2)
            ps.satisfied_version = ps.placement_version
            return False
        n_cap = self.policy.n_cap_factor * self.k
        if current >= n_cap:
            if assessment.durability >= cfg.sigma1 and not pl.backup_complete:
                # restore-time threshold unreachable in this population
                ps.outcome.cap_warning = True
                self.cap_warning_count += 1
                self._mark_backup_complete(ps, assessment, ettr, s2)
            return False
        return True

    def _fresh_predicate(self, owner: _PeerState):
        pl = owner.placement
        oid = owner.profile.id
        receiving = {t.dst for t in owner.out_all.values() if t.kind == "upload"}

        def ok(pid: str) -> bool:
            if pid == oid or pid in pl.holders or pid in receiving:
                return False
            ps = self.states[pid]
            return (ps.alive and ps.online and not ps.restoring
                    and ps.committed_frags < self.cap_frags)
        return ok

    def _select_target(self, owner: _PeerState) -> str | None:
        choice = uniform_eligible(self.rng_select, self._online_list,
                                  self._fresh_predicate(owner))
        if choice is not None:
            return choice
        # no fresh candidate: allow a repeat placement rather than stalling
        oid = owner.profile.id

        def repeat_ok(pid: str) -> bool:
            if pid == oid:
                return False
            ps = self.states[pid]
            return (ps.alive and ps.online and not ps.restoring
                    and ps.committed_frags < self.cap_frags)
        return uniform_eligible(self.rng_select, self._online_list, repeat_ok)

    def _service_owner(self, ps: _PeerState) -> None:
        """Start upload transfers until the policy goal or a stall is reached."""
        if ps.crashed or ps.gone or ps.restoring or not ps.online:
            return
        while ps.active_uploads() < self.max_parallel:
            if not self._needs_more_fragments(ps):
                return
            # paused uploads with their target back online come first:
            # finishing a half-sent fragment beats starting a fresh one
            resumed = None
            for t in ps.out_all.values():
                if (t.kind == "upload" and not t.active
                        and self.states[t.dst].online):
                    resumed = t
                    break
            if resumed is not None:
                self._activate(resumed)
                continue
            target = self._select_target(ps)
            if target is None:
                self.stalled_owners[ps.profile.id] = None
                return
            ps.upload_inflight += 1
            self.states[target].committed_frags += 1
            self._new_transfer(ps.profile.id, target, ps.profile.id,
                               "upload", self.frag_size)

    def _finish_upload(self, t: Transfer, dirty: set[str]) -> None:
        owner = self.states[t.owner]
        dst = self.states[t.dst]
        owner.placement.add_fragment(t.dst)
        owner.placement_version += 1
        dst.stored[(t.owner, t.tid)] = None
        self._service_owner(owner)
        dirty.add(t.owner)

    # -------------------------------------------------------------- restore

    def _start_restore(self, ps: _PeerState, dirty: set[str]) -> None:
        ps.restoring = True
        ps.online = True  # forced online for the whole restore
        self._online_remove(ps.profile.id)  # not a storage candidate meanwhile
        ps.restore_got = 0
        ps.restore_fetch_left = dict(ps.placement.holders)
        ps.outcome.restore_started_at = self.now
        self.active_restorers[ps.profile.id] = None
        self._service_restore(ps, dirty)

    def _holder_frags(self, hs: _PeerState, owner_id: str) -> int:
        """Fragments of owner_id physically present on the holder right now."""
        return sum(1 for owner, _ in hs.stored if owner == owner_id)

    def _restore_available(self, ps: _PeerState) -> int:
        """Fragments still physically retrievable, now or eventually."""
        avail = ps.restore_got
        for t in ps.in_all.values():
            if t.kind == "restore":
                avail += 1  # in-flight or paused fetch from a live holder
        pid = ps.profile.id
        for hid, left in ps.restore_fetch_left.items():
            if left > 0:
                hs = self.states[hid]
                if hs.alive:
                    avail += min(left, self._holder_frags(hs, pid))
        return avail

    def _service_restore(self, ps: _PeerState, dirty: set[str]) -> None:
        if not ps.restoring or ps.restore_got >= self.k:
            return
        if self._restore_available(ps) < self.k:
            self._fail_restore(ps, dirty)
            return
        # fetch from every online holder in parallel; the first k fragments
        # to arrive win and the surplus is cancelled at completion
        pid = ps.profile.id
        for hid in list(ps.restore_fetch_left):
            left = ps.restore_fetch_left[hid]
            if left <= 0:
                continue
            hs = self.states[hid]
            if not (hs.alive and hs.online):
                continue
            fetchable = min(left, self._holder_frags(hs, pid))
            ps.restore_fetch_left[hid] = 0
            for _ in range(fetchable):
                self._new_transfer(hid, pid, pid, "restore", self.frag_size)
            if fetchable:
                dirty.add(hid)
        dirty.add(pid)

    def _finish_restore_fetch(self, t: Transfer, dirty: set[str]) -> None:
        ps = self.states[t.dst]
        ps.restore_got += 1
        if ps.restore_got >= self.k:
            self._complete_restore(ps, dirty)
        else:
            self._service_restore(ps, dirty)

    def _complete_restore(self, ps: _PeerState, dirty: set[str]) -> None:
        out = ps.outcome
        out.restore_completed_at = self.now
        out.ttr = self.now - out.restore_started_at
        ps.restoring = False
        ps.crashed = False  # recovered: data intact, storage empty, no second death
        self.active_restorers.pop(ps.profile.id, None)
        for t in list(ps.in_all.values()):
            if t.kind == "restore":
                self._remove_transfer(t)
                dirty.add(t.src)
        # back on its trace, with data intact; remote placements survive
        ps.online = ps.trace_online
        if ps.online:
            self._online_add(ps.profile.id)
            self._service_owner(ps)
            # a fresh storage candidate appeared; stalled owners may proceed
            for owner_id in list(self.stalled_owners):
                self.stalled_owners.pop(owner_id, None)
                self._service_owner(self.states[owner_id])
                dirty.add(owner_id)
        dirty.add(ps.profile.id)

    def _restore_recheck(self, ps: _PeerState, dirty: set[str]) -> None:
        if ps.restoring and self._restore_available(ps) < self.k:
            self._fail_restore(ps, dirty)

    def _fail_restore(self, ps: _PeerState, dirty: set[str]) -> None:
        ps.outcome.loss_category = LOSS_FAILED_RESTORE
        ps.restoring = False
        ps.gone = True
        ps.online = False
        self.active_restorers.pop(ps.profile.id, None)
        for t in list(ps.in_all.values()):
            self._cancel_transfer(t, dirty)
        dirty.add(ps.profile.id)

    # --------------------------------------------------------- reallocation

    def _realloc(self, seed_peers: set[str], now: float) -> None:
        """Recompute rates for the link neighborhood touched by the given peers.

        A breadth-first walk over the shared-link graph collects the active
        transfers within ``realloc_radius`` hops of the changed peers and
        re-runs progressive filling over them. Transfers beyond the radius
        keep their current (feasible) rates; the capacity they occupy on
        boundary links is subtracted before filling, so no link is ever
        oversubscribed. A radius of None recomputes whole components, which
        is exact max-min but quadratic in busy neighborhoods.
        """
        if self._extra_dirty:
            seed_peers = set(seed_peers) | self._extra_dirty
            self._extra_dirty.clear()
        radius = self.realloc_radius
        affected: list[Transfer] = []
        seen: set[int] = set()
        queue: deque[tuple[str, str, int]] = deque()
        depth_of: dict[tuple[str, str], int] = {}
        boundary: list[tuple[str, str]] = []
        for pid in sorted(seed_peers):
            for res in (("up", pid), ("down", pid)):
                depth_of[res] = 0
                queue.append((res[0], res[1], 0))
        while queue:
            direction, pid, depth = queue.popleft()
            ps = self.states[pid]
            bucket = ps.out_active if direction == "up" else ps.in_active
            for t in bucket.values():
                if t.tid in seen:
                    continue
                seen.add(t.tid)
                affected.append(t)
                for res in (("up", t.src), ("down", t.dst)):
                    if res in depth_of:
                        continue
                    depth_of[res] = depth + 1
                    if radius is None or depth + 1 <= radius:
                        queue.append((res[0], res[1], depth + 1))
                    else:
                        boundary.append(res)
        if not affected:
            return
        self.realloc_count += 1
        affected.sort(key=lambda t: t.tid)
        for t in affected:
            self._advance(t)
        flows = [(t.src, t.dst) for t in affected]
        peers_involved = {p for f in flows for p in f}
        up = {p: self.states[p].profile.uplink for p in peers_involved}
        down = {p: self.states[p].profile.downlink for p in peers_involved}
        # transfers past the boundary keep flowing at their frozen rates;
        # reserve their bandwidth on the links they share with this region
        for direction, pid in boundary:
            ps = self.states[pid]
            bucket = ps.out_active if direction == "up" else ps.in_active
            frozen = sum(t.rate for t in bucket.values() if t.tid not in seen)
            if frozen > 0:
                caps = up if direction == "up" else down
                caps[pid] = max(0.0, caps[pid] - frozen)
        rates = max_min_rates(flows, up, down)
        if self.audit:
            audit_conservation(flows, rates, up, down)
        for t, rate in zip(affected, rates):
            t.rate = rate
            if t.remaining <= _DONE_EPS:
                finish = now
            elif rate > 0:
                finish = now + t.remaining / rate
            else:
                continue  # stalled; any outstanding event reschedules itself
            if finish < t.deadline:
                t.deadline = finish
                self._push(finish, TRANSFER_COMPLETE, (t.tid, t.epoch))

    # -------------------------------------------------------------- wrap-up

    def _finalize(self) -> None:
        for pid, ps in self.states.items():
            out = ps.outcome
            out.n_final = ps.placement.n
            if ps.restoring:
                out.unfinished_restore_at_horizon = True
            if (not ps.placement.backup_complete and not ps.crashed
                    and out.loss_category == LOSS_NONE):
                out.unfinished_backup_at_horizon = True


def run(config: PolicyConfig, policy, peers: Sequence[PeerProfile], seed: int,
        audit: bool = True, keep_event_log: bool = True) -> SimulationOutcome:
    """Convenience wrapper: build a Simulation and run it."""
    return Simulation(config, policy, peers, seed, audit=audit,
                      keep_event_log=keep_event_log).run()
