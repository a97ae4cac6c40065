"""Redundancy policy mathematics.

Survival probability of a holder over a time window, binomial data
durability, restore-time estimation from holder upload rates, the adaptive
stop condition, and the fixed availability-based baseline planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .model import InvalidArgument


class InsufficientHolders(ValueError):
    """Fewer holder entries than the k fragments required for a restore."""


class UnreachableTarget(ValueError):
    """No fragment count up to n_max can reach the requested probability."""


@dataclass(frozen=True)
class HolderRate:
    """A holder's long-run effective serving rate u_i * a_i."""

    peer_id: str
    expected_upload_rate: float  # bytes/s


@dataclass(frozen=True)
class DurabilityAssessment:
    n: int
    k: int
    p_survive: float
    durability: float
    time_window: float


def survival_probability(t: float, tau: float) -> float:
    """Probability that a peer with exponential lifetime (mean tau) survives t."""
    if not tau > 0:
        raise InvalidArgument(f"tau must be > 0, got {tau}")
    if t < 0 or not math.isfinite(t):
        raise InvalidArgument(f"t must be finite and >= 0, got {t}")
    return math.exp(-t / tau)


def _log_binom_pmf(i: int, n: int, log_p: float, log_q: float) -> float:
    coeff = math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)
    return coeff + i * log_p + (n - i) * log_q


def _binom_tail_log(lo: int, hi: int, n: int, p: float) -> float:
    """Sum of Binomial(n, p) pmf over [lo, hi], via log-space terms."""
    log_p = math.log(p)
    log_q = math.log1p(-p)
    terms = [_log_binom_pmf(i, n, log_p, log_q) for i in range(lo, hi + 1)]
    m = max(terms)
    return math.fsum(math.exp(t - m) for t in terms) * math.exp(m)


def durability(n: int, k: int, p_survive: float) -> float:
    """P[at least k of n fragments survive], each independently with p_survive.

    Terms are computed in log space (log-gamma binomial coefficients) and the
    smaller of the two tails is summed, so the result stays accurate for n in
    the hundreds where naive binomial coefficients overflow.
    """
    if k < 1 or n < k:
        raise InvalidArgument(f"need n >= k >= 1, got n={n}, k={k}")
    if not 0 <= p_survive <= 1:
        raise InvalidArgument(f"p_survive must be in [0, 1], got {p_survive}")
    if p_survive == 0.0:
        return 0.0
    if p_survive == 1.0:
        return 1.0
    # Sum whichever tail is smaller: upper tail directly when k is above the
    # mean, otherwise the complement of the lower tail.
    if k > n * p_survive:
        return min(1.0, _binom_tail_log(k, n, n, p_survive))
    return max(0.0, 1.0 - _binom_tail_log(0, k - 1, n, p_survive))


def expected_upload_rate(uplink: float, availability: float) -> float:
    """Effective long-run serving rate of a holder: uplink * availability."""
    if not 0 <= availability <= 1:
        raise InvalidArgument(f"availability must be in [0, 1], got {availability}")
    if uplink < 0:
        raise InvalidArgument(f"uplink must be >= 0, got {uplink}")
    return uplink * availability


def estimate_ttr(object_size: float, owner_downlink: float, k: int,
                 holders: Sequence[HolderRate]) -> float:
    """Estimated restore time: max(o / D0, o / (k * mu_k)).

    mu_k is the k-th largest expected upload rate among holder entries, i.e.
    the slowest of the k best holders a restore would draw from.
    """
    if owner_downlink <= 0:
        raise InvalidArgument("owner_downlink must be > 0")
    if len(holders) < k:
        raise InsufficientHolders(f"need at least {k} holder entries, have {len(holders)}")
    rates = sorted((h.expected_upload_rate for h in holders), reverse=True)
    mu_k = rates[k - 1]
    holder_bound = math.inf if mu_k <= 0 else object_size / (k * mu_k)
    return max(object_size / owner_downlink, holder_bound)


def sigma2(min_ttr: float, alpha: float, floor: float) -> float:
    """Restore-time threshold: alpha * minTTR, never below the floor."""
    return max(floor, alpha * min_ttr)


def stop_condition(assessment: DurabilityAssessment, ettr: float,
                   sigma1: float, sigma2_value: float) -> bool:
    """True when both durability and estimated restore time are acceptable."""
    return assessment.durability >= sigma1 and ettr <= sigma2_value


def baseline_fragment_count(k: int, mean_availability: float, target: float,
                            n_max: int | None = None) -> int:
    """Smallest n >= k whose availability P[Bin(n, a) >= k] reaches the target.

    This is the fixed, system-wide planner used by availability-based
    redundancy schemes.
    """
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    if not 0 < mean_availability < 1:
        raise InvalidArgument(f"mean_availability must be in (0, 1), got {mean_availability}")
    if not 0 < target < 1:
        raise InvalidArgument(f"target must be in (0, 1), got {target}")
    if n_max is None:
        n_max = 10 * k
    for n in range(k, n_max + 1):
        if durability(n, k, mean_availability) >= target:
            return n
    raise UnreachableTarget(
        f"no n <= {n_max} reaches target {target} with k={k}, a={mean_availability}"
    )


def adaptive_assessment(*, object_size: float, k: int, tau: float, w: float,
                        holders: Sequence[HolderRate],
                        owner_downlink: float) -> tuple[DurabilityAssessment, float]:
    """Durability and eTTR for the current holder set.

    The assessment window is t = w + eTTR; the true TTR is unknown at
    placement time so its estimate stands in for it.
    """
    ettr = estimate_ttr(object_size, owner_downlink, k, holders)
    t = w + ettr
    p = survival_probability(t, tau) if math.isfinite(t) else 0.0
    n = len(holders)
    d = durability(n, k, p)
    return DurabilityAssessment(n=n, k=k, p_survive=p, durability=d, time_window=t), ettr
