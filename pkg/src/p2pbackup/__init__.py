"""Trace-driven simulator and policy library for peer-to-peer backup.

Implements an adaptive redundancy scheme that places erasure-coded
fragments until a durability target and a restore-time bound are both met,
alongside a fixed availability-based baseline, and a discrete-event
simulator that replays both over churn traces.
"""

from .model import (
    AvailabilityTrace,
    InvalidArgument,
    PeerProfile,
    PlacementState,
    PolicyConfig,
    TraceError,
    TraceEvent,
    derive_k,
    redundancy_factor,
)
from .policy import (
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
from .simulator import (
    AdaptivePolicy,
    BaselinePolicy,
    Simulation,
    SimulationOutcome,
    min_ttb,
    min_ttr,
    run,
)

__all__ = [
    "AvailabilityTrace",
    "InvalidArgument",
    "PeerProfile",
    "PlacementState",
    "PolicyConfig",
    "TraceError",
    "TraceEvent",
    "derive_k",
    "redundancy_factor",
    "DurabilityAssessment",
    "HolderRate",
    "InsufficientHolders",
    "UnreachableTarget",
    "adaptive_assessment",
    "baseline_fragment_count",
    "durability",
    "estimate_ttr",
    "expected_upload_rate",
    "sigma2",
    "stop_condition",
    "survival_probability",
    "AdaptivePolicy",
    "BaselinePolicy",
    "Simulation",
    "SimulationOutcome",
    "min_ttb",
    "min_ttr",
    "run",
]

__version__ = "1.0.0"
