"""Max-min fair bandwidth allocation via progressive filling.

Transfers are constrained only by the two access links they cross: the
source peer's uplink and the destination peer's downlink. Rates rise
together from zero; whenever a link saturates, the transfers crossing it
freeze at the current level and filling continues for the rest.
"""

from __future__ import annotations

import heapq
from typing import Hashable, Mapping, Sequence

Resource = tuple[str, Hashable]  # ("up", peer) or ("down", peer)


def max_min_rates(flows: Sequence[tuple[Hashable, Hashable]],
                  uplink: Mapping[Hashable, float],
                  downlink: Mapping[Hashable, float]) -> list[float]:
    """Progressive-filling rates for (src, dst) flows.

    Every flow consumes its rate on ("up", src) and ("down", dst). Returns
    one rate per flow, in input order.
    """
    if not flows:
        return []
    members: dict[Resource, list[int]] = {}
    caps: dict[Resource, float] = {}
    for i, (src, dst) in enumerate(flows):
        for res, cap in ((("up", src), uplink[src]), (("down", dst), downlink[dst])):
            if res not in members:
                members[res] = []
                caps[res] = cap
            members[res].append(i)

    rates = [0.0] * len(flows)
    frozen = [False] * len(flows)
    unfrozen_count = {res: len(m) for res, m in members.items()}
    # A link saturates at level residual/count above the current level; when
    # another link saturates first, count here only drops, so the saturation
    # level only rises. A lazy heap keyed by that level therefore needs no
    # decrease-key: stale entries are re-pushed and skipped on pop.
    level_at = {res: caps[res] / cnt for res, cnt in unfrozen_count.items()}
    heap: list[tuple[float, Resource]] = [(lvl, res) for res, lvl in level_at.items()]
    heapq.heapify(heap)
    remaining = len(flows)
    while remaining > 0 and heap:
        level, res = heapq.heappop(heap)
        cnt = unfrozen_count[res]
        if cnt == 0 or level != level_at[res]:
            continue  # already drained, or a stale heap entry
        # freeze every unfrozen flow crossing this link at the current level
        for i in members[res]:
            if frozen[i]:
                continue
            frozen[i] = True
            rates[i] = level
            remaining -= 1
            src, dst = flows[i]
            for other in (("up", src), ("down", dst)):
                if other == res:
                    continue
                ocnt = unfrozen_count[other] - 1
                unfrozen_count[other] = ocnt
                if ocnt > 0:
                    # residual above `level` spreads over one fewer flow
                    residual = max(0.0, level_at[other] - level) * (ocnt + 1)
                    new_level = level + residual / ocnt
                    level_at[other] = new_level
                    heapq.heappush(heap, (new_level, other))
        unfrozen_count[res] = 0
    return rates


def components(flows: Sequence[tuple[Hashable, Hashable]]) -> list[list[int]]:
    """Group flow indices into connected components of the resource graph."""
    by_res: dict[Resource, list[int]] = {}
    for i, (src, dst) in enumerate(flows):
        by_res.setdefault(("up", src), []).append(i)
        by_res.setdefault(("down", dst), []).append(i)
    seen = [False] * len(flows)
    comps = []
    for start in range(len(flows)):
        if seen[start]:
            continue
        comp = []
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            src, dst = flows[i]
            for res in (("up", src), ("down", dst)):
                for j in by_res[res]:
                    if not seen[j]:
                        seen[j] = True
                        stack.append(j)
        comps.append(sorted(comp))
    return comps


def audit_conservation(flows: Sequence[tuple[Hashable, Hashable]],
                       rates: Sequence[float],
                       uplink: Mapping[Hashable, float],
                       downlink: Mapping[Hashable, float],
                       rel_tol: float = 1e-6) -> None:
    """Raise AssertionError if any link carries more than its capacity."""
    up_load: dict[Hashable, float] = {}
    down_load: dict[Hashable, float] = {}
    for (src, dst), r in zip(flows, rates):
        assert r >= 0, f"negative rate {r} on {src}->{dst}"
        up_load[src] = up_load.get(src, 0.0) + r
        down_load[dst] = down_load.get(dst, 0.0) + r
    for peer, load in up_load.items():
        cap = uplink[peer]
        assert load <= cap * (1 + rel_tol), f"uplink of {peer} oversubscribed: {load} > {cap}"
    for peer, load in down_load.items():
        cap = downlink[peer]
        assert load <= cap * (1 + rel_tol), f"downlink of {peer} oversubscribed: {load} > {cap}"
