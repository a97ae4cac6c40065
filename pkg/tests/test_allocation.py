"""Max-min fair progressive filling against an independent reference."""

import pytest
from hypothesis import given, settings, strategies as st

from p2pbackup.allocation import audit_conservation, components, max_min_rates


def reference_progressive_filling(flows, uplink, downlink):
    """Independent oracle: classic round-based water filling.

    Each round computes, for every unsaturated link, the level at which it
    would saturate if all its unfrozen flows grew together; the global
    minimum of those levels freezes that link's flows. Quadratic and
    straightforward, kept deliberately different from the production code.
    """
    rates = [0.0] * len(flows)
    frozen = [False] * len(flows)
    while not all(frozen):
        links = {}
        for i, (src, dst) in enumerate(flows):
            if frozen[i]:
                continue
            links.setdefault(("up", src), []).append(i)
            links.setdefault(("down", dst), []).append(i)
        best_level, best_members = None, None
        for (kind, peer), members in links.items():
            cap = uplink[peer] if kind == "up" else downlink[peer]
            used = sum(rates[i] for i, (s, d) in enumerate(flows)
                       if frozen[i] and (s == peer if kind == "up" else d == peer))
            level = (cap - used) / len(members)
            if best_level is None or level < best_level:
                best_level, best_members = level, members
        for i in best_members:
            frozen[i] = True
            rates[i] = best_level
    return rates


class TestExamples:
    def test_single_transfer_uplink_bound(self):
        rates = max_min_rates([("a", "b")], {"a": 1.0}, {"b": 4.0})
        assert rates == [1.0]

    def test_two_transfers_share_one_uplink(self):
        rates = max_min_rates([("a", "b"), ("a", "c")], {"a": 2.0},
                              {"b": 100.0, "c": 100.0})
        assert rates == [1.0, 1.0]

    def test_three_destinations_mixed_downlinks(self):
        flows = [("s", "d1"), ("s", "d2"), ("s", "d3")]
        rates = max_min_rates(flows, {"s": 3.0},
                              {"d1": 0.5, "d2": 0.5, "d3": 4.0})
        assert rates == pytest.approx([0.5, 0.5, 2.0])

    def test_empty(self):
        assert max_min_rates([], {}, {}) == []

    def test_duplicate_flows_split_evenly(self):
        flows = [("a", "b"), ("a", "b")]
        rates = max_min_rates(flows, {"a": 3.0}, {"b": 1.0})
        assert rates == pytest.approx([0.5, 0.5])


class TestComponents:
    def test_disjoint_flows_split(self):
        comps = components([("a", "b"), ("c", "d"), ("a", "e")])
        assert comps == [[0, 2], [1]]


class TestAudit:
    def test_detects_oversubscription(self):
        with pytest.raises(AssertionError):
            audit_conservation([("a", "b")], [2.0], {"a": 1.0}, {"b": 4.0})

    def test_accepts_feasible(self):
        audit_conservation([("a", "b")], [1.0], {"a": 1.0}, {"b": 4.0})


@st.composite
def random_instance(draw):
    n_peers = draw(st.integers(min_value=2, max_value=8))
    peers = [f"p{i}" for i in range(n_peers)]
    caps = st.floats(min_value=0.1, max_value=10.0)
    uplink = {p: draw(caps) for p in peers}
    downlink = {p: draw(caps) for p in peers}
    n_flows = draw(st.integers(min_value=1, max_value=14))
    flows = []
    for _ in range(n_flows):
        src = draw(st.sampled_from(peers))
        dst = draw(st.sampled_from([p for p in peers if p != src]))
        flows.append((src, dst))
    return flows, uplink, downlink


class TestAgainstOracle:
    @given(random_instance())
    @settings(max_examples=200, deadline=None)
    def test_matches_reference_water_filling(self, instance):
        flows, up, down = instance
        got = max_min_rates(flows, up, down)
        want = reference_progressive_filling(flows, up, down)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-12)
        audit_conservation(flows, got, up, down)

    @given(random_instance())
    @settings(max_examples=100, deadline=None)
    def test_max_min_optimality(self, instance):
        """Every flow is blocked by a saturated link where it has a max rate."""
        flows, up, down = instance
        rates = max_min_rates(flows, up, down)
        for i, (src, dst) in enumerate(flows):
            blocked = False
            for kind, peer, cap in (("up", src, up[src]), ("down", dst, down[dst])):
                members = [j for j, (s, d) in enumerate(flows)
                           if (s if kind == "up" else d) == peer]
                load = sum(rates[j] for j in members)
                saturated = load >= cap * (1 - 1e-9)
                if saturated and rates[i] >= max(rates[j] for j in members) - 1e-9:
                    blocked = True
            assert blocked, (i, flows, rates)
