from .fusion import FeatureGate, fuse_mean, gate_fuse
from .multi import (
    MultiUserConfig,
    MultiUserMode,
    MultiUserResult,
    complete_graph,
    default_d2d,
    ring_graph,
    run_multiuser,
)
from .single import (
    Mechanism,
    MechanismConfig,
    Scheme,
    run_e2u,
    run_mechanism,
    run_peu,
    run_seu,
    run_u2e,
    source_tensor,
)
from .timeline import RunMetrics, Timeline, TimelineError, audit_timeline

__all__ = [
    "FeatureGate",
    "Mechanism",
    "MechanismConfig",
    "MultiUserConfig",
    "MultiUserMode",
    "MultiUserResult",
    "RunMetrics",
    "Scheme",
    "Timeline",
    "TimelineError",
    "audit_timeline",
    "complete_graph",
    "default_d2d",
    "fuse_mean",
    "gate_fuse",
    "ring_graph",
    "run_e2u",
    "run_mechanism",
    "run_multiuser",
    "run_peu",
    "run_seu",
    "run_u2e",
    "source_tensor",
]
