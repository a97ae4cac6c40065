"""Redundancy-policy math against closed forms and independent oracles."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from p2pbackup.model import DAY, HOUR, InvalidArgument, WEEK
from p2pbackup.policy import (
    DurabilityAssessment,
    HolderRate,
    InsufficientHolders,
    UnreachableTarget,
    adaptive_assessment,
    baseline_fragment_count,
    durability,
    estimate_ttr,
    expected_upload_rate,
    sigma2,
    stop_condition,
    survival_probability,
)


def hr(rate):
    return HolderRate(peer_id="h", expected_upload_rate=rate)


# --------------------------------------------------------- survival_probability

class TestSurvival:
    def test_zero_elapsed(self):
        assert survival_probability(0.0, 123.0) == 1.0

    def test_one_mean_lifetime(self):
        assert survival_probability(5.0, 5.0) == pytest.approx(math.exp(-1))

    def test_two_weeks_of_ninety_days(self):
        # exp(-14/90), frozen from direct evaluation of the closed form
        assert survival_probability(2 * WEEK, 90 * DAY) == pytest.approx(
            0.8559395234122652, rel=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(InvalidArgument):
            survival_probability(1.0, 0.0)
        with pytest.raises(InvalidArgument):
            survival_probability(-1.0, 1.0)
        with pytest.raises(InvalidArgument):
            survival_probability(math.inf, 1.0)


# ------------------------------------------------------------------- durability

class TestDurability:
    def test_all_must_survive_closed_form(self):
        assert durability(2, 2, 0.5) == pytest.approx(0.25, rel=1e-12)

    @given(st.integers(min_value=1, max_value=300),
           st.floats(min_value=1e-6, max_value=1.0 - 1e-9))
    def test_n_equals_k_is_p_to_the_k(self, k, p):
        assert durability(k, k, p) == pytest.approx(p ** k, rel=1e-12)

    def test_three_choose_two_enumeration(self):
        # P[Bin(3,0.5) >= 2] = 3*0.125 + 0.125
        assert durability(3, 2, 0.5) == pytest.approx(0.5, rel=1e-12)

    def test_reference_planner_point_clears_target(self):
        assert durability(228, 64, 0.36) >= 0.99

    def test_edge_probabilities(self):
        assert durability(5, 3, 0.0) == 0.0
        assert durability(5, 3, 1.0) == 1.0

    def test_rejects_bad_arguments(self):
        with pytest.raises(InvalidArgument):
            durability(3, 4, 0.5)
        with pytest.raises(InvalidArgument):
            durability(4, 0, 0.5)
        with pytest.raises(InvalidArgument):
            durability(4, 2, 1.5)

    def test_matches_exact_binomial_tail_oracle(self):
        rng = random.Random(7)
        for _ in range(200):
            n = rng.randint(1, 400)
            k = rng.randint(1, n)
            p = rng.random()
            expect = float(stats.binom.sf(k - 1, n, p))
            assert durability(n, k, p) == pytest.approx(expect, abs=1e-12)

    @given(st.integers(min_value=1, max_value=120),
           st.integers(min_value=0, max_value=120),
           st.floats(min_value=0.01, max_value=0.99))
    @settings(max_examples=150)
    def test_monotone_in_n(self, k, extra, p):
        n = k + extra
        assert durability(n + 1, k, p) >= durability(n, k, p) - 1e-12

    @given(st.integers(min_value=1, max_value=120),
           st.integers(min_value=0, max_value=120),
           st.floats(min_value=0.01, max_value=0.98),
           st.floats(min_value=1e-6, max_value=0.01))
    @settings(max_examples=150)
    def test_monotone_in_p(self, k, extra, p, dp):
        n = k + extra
        assert durability(n, k, p + dp) >= durability(n, k, p) - 1e-12

    @given(st.integers(min_value=2, max_value=120),
           st.integers(min_value=0, max_value=120),
           st.floats(min_value=0.01, max_value=0.99))
    @settings(max_examples=150)
    def test_antitone_in_k(self, k, extra, p):
        n = k + extra
        assert durability(n, k - 1, p) >= durability(n, k, p) - 1e-12


# ----------------------------------------------------------- expected_upload_rate

class TestExpectedUploadRate:
    def test_product(self):
        assert expected_upload_rate(100.0, 0.5) == 50.0

    def test_always_on_peer(self):
        assert expected_upload_rate(77.0, 1.0) == 77.0

    def test_reference_medians(self):
        assert expected_upload_rate(77 * 1024, 0.36) == pytest.approx(77 * 1024 * 0.36)

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidArgument):
            expected_upload_rate(1.0, 1.5)
        with pytest.raises(InvalidArgument):
            expected_upload_rate(-1.0, 0.5)


# ----------------------------------------------------------------- estimate_ttr

class TestEstimateTtr:
    def test_holder_bound_dominates(self):
        got = estimate_ttr(10240.0, 4.0, 2, [hr(2.0), hr(0.5)])
        assert got == pytest.approx(10240.0)  # max(2560, 10240)

    def test_owner_downlink_dominates(self):
        got = estimate_ttr(10240.0, 1.0, 2, [hr(100.0), hr(100.0)])
        assert got == pytest.approx(10240.0)

    def test_extra_equal_entries_do_not_change_mu_k(self):
        two = estimate_ttr(10240.0, 4.0, 2, [hr(0.5), hr(0.5)])
        three = estimate_ttr(10240.0, 4.0, 2, [hr(0.5), hr(0.5), hr(0.5)])
        assert two == three

    def test_insufficient_holders(self):
        with pytest.raises(InsufficientHolders):
            estimate_ttr(1.0, 1.0, 2, [hr(1.0)])

    def test_zero_rate_holder_gives_infinite_estimate(self):
        assert estimate_ttr(10.0, 1.0, 2, [hr(1.0), hr(0.0)]) == math.inf

    @given(st.lists(st.floats(min_value=0.01, max_value=100.0), min_size=3,
                    max_size=12),
           st.floats(min_value=0.01, max_value=10.0))
    def test_at_least_owner_downlink_bound(self, rates, boost):
        k = 3
        holders = [hr(r) for r in rates]
        base = estimate_ttr(1000.0, 2.0, k, holders)
        assert base >= 1000.0 / 2.0
        # raising any holder's rate never slows the estimate
        improved = [hr(r) for r in rates]
        improved[0] = hr(rates[0] + boost)
        assert estimate_ttr(1000.0, 2.0, k, improved) <= base + 1e-9


# -------------------------------------------------------- sigma2 / stop_condition

class TestStopCondition:
    def test_floor_dominates(self):
        assert sigma2(12 * HOUR, 2.0, DAY) == DAY

    def test_scaled_min_ttr_dominates(self):
        assert sigma2(3 * DAY, 2.0, DAY) == 6 * DAY

    def test_degenerate_zero(self):
        assert sigma2(0.0, 2.0, 0.0) == 0.0

    @staticmethod
    def _assessment(d):
        return DurabilityAssessment(n=10, k=5, p_survive=0.9, durability=d,
                                    time_window=100.0)

    def test_both_satisfied(self):
        assert stop_condition(self._assessment(0.99999), HOUR, 0.9999, DAY)

    def test_durability_short(self):
        assert not stop_condition(self._assessment(0.999), HOUR, 0.9999, DAY)

    def test_ettr_too_large(self):
        assert not stop_condition(self._assessment(1.0), 2 * DAY, 0.9999, DAY)


# ------------------------------------------------------- baseline_fragment_count

class TestBaselinePlanner:
    def test_minimality_invariant_on_reference_point(self):
        n = baseline_fragment_count(64, 0.36, 0.99)
        assert durability(n, 64, 0.36) >= 0.99
        assert durability(n - 1, 64, 0.36) < 0.99
        # independent check of the same minimality via the scipy tail oracle
        assert float(stats.binom.sf(63, n, 0.36)) >= 0.99
        assert float(stats.binom.sf(63, n - 1, 0.36)) < 0.99

    def test_small_brute_force_case(self):
        # P[Bin(6,0.5)>=2]=0.890625 < 0.9 <= P[Bin(7,0.5)>=2]=0.9375
        assert baseline_fragment_count(2, 0.5, 0.9, n_max=100) == 7

    def test_single_fragment_suffices(self):
        assert baseline_fragment_count(1, 0.99, 0.9, n_max=100) == 1

    def test_unreachable_target(self):
        with pytest.raises(UnreachableTarget):
            baseline_fragment_count(50, 0.05, 0.999999, n_max=60)

    @given(st.integers(min_value=1, max_value=40),
           st.floats(min_value=0.2, max_value=0.95),
           st.floats(min_value=0.5, max_value=0.999))
    @settings(max_examples=60, deadline=None)
    def test_minimality_property(self, k, a, target):
        try:
            n = baseline_fragment_count(k, a, target)
        except UnreachableTarget:
            return
        assert n >= k
        assert durability(n, k, a) >= target
        if n > k:
            assert durability(n - 1, k, a) < target


# ---------------------------------------------------------- adaptive_assessment

class TestAdaptiveAssessment:
    def test_large_tau_regime(self):
        holders = [HolderRate("a", 1.0 * 2 ** 20), HolderRate("b", 1.0 * 2 ** 20)]
        assessment, ettr = adaptive_assessment(
            object_size=2 * 2 ** 20, k=2, tau=1e9, w=0.0,
            holders=holders, owner_downlink=8 * 2 ** 20)
        assert ettr == pytest.approx(1.0)  # max(0.25, 2/(2*1)) seconds
        assert assessment.n == 2
        assert assessment.p_survive == pytest.approx(math.exp(-1e-9), rel=1e-12)
        assert assessment.durability == pytest.approx(1.0, abs=1e-6)

    def test_tau_comparable_to_window(self):
        holders = [HolderRate("a", 1.0 * 2 ** 20), HolderRate("b", 1.0 * 2 ** 20)]
        assessment, ettr = adaptive_assessment(
            object_size=2 * 2 ** 20, k=2, tau=1.0, w=0.0,
            holders=holders, owner_downlink=8 * 2 ** 20)
        assert ettr == pytest.approx(1.0)
        assert assessment.p_survive == pytest.approx(math.exp(-1.0), rel=1e-12)
        assert assessment.durability == pytest.approx(math.exp(-2.0), rel=1e-9)

    def test_time_window_is_w_plus_ettr(self):
        holders = [HolderRate("a", 2.0), HolderRate("b", 2.0)]
        assessment, ettr = adaptive_assessment(
            object_size=8.0, k=2, tau=100.0, w=5.0,
            holders=holders, owner_downlink=4.0)
        assert assessment.time_window == pytest.approx(5.0 + ettr)

    def test_monotone_stop_condition_under_growth(self):
        # adding holder entries never turns a satisfied stop condition false
        # when lifetimes are long (durability rises with n; eTTR can't rise)
        rng = random.Random(3)
        for _ in range(50):
            k = rng.randint(1, 6)
            rates = [rng.uniform(0.5, 5.0) for _ in range(k + rng.randint(0, 4))]
            holders = [HolderRate(f"h{i}", r) for i, r in enumerate(rates)]
            kwargs = dict(object_size=10.0, k=k, tau=1e12, w=0.0,
                          owner_downlink=100.0)
            assessment, ettr = adaptive_assessment(holders=holders, **kwargs)
            s2 = max(1.0, 2 * ettr)
            if stop_condition(assessment, ettr, 0.9999, s2):
                grown = holders + [HolderRate("extra", max(rates))]
                a2, e2 = adaptive_assessment(holders=grown, **kwargs)
                assert stop_condition(a2, e2, 0.9999, s2)


# --------------------------------------------------------- Monte Carlo durability

def test_durability_matches_monte_carlo_oracle():
    """50 random (n, k, p) cases vs a 10^5-sample binomial-tail simulation."""
    rng = np.random.default_rng(2024)
    samples = 100_000
    for _ in range(50):
        n = int(rng.integers(1, 201))
        k = int(rng.integers(1, n + 1))
        p = float(rng.uniform(0.02, 0.98))
        hits = rng.binomial(n, p, size=samples) >= k
        est = hits.mean()
        d = durability(n, k, p)
        # standard error under the analytic success probability, so extreme
        # cases (zero observed hits) still get a meaningful band
        se = math.sqrt(max(d * (1 - d), 1e-12) / samples)
        assert abs(d - est) <= 3 * se + 1e-9, (n, k, p)
