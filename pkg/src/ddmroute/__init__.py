"""Early-stopping candidate selection with drift-diffusion evidence accumulation."""

from .engine import (
    BoundaryPair,
    Candidate,
    Decision,
    EvidenceState,
    ProviderSet,
    RoutingConfig,
    SourceItem,
    StepKind,
    TerminalCase,
    TraceStep,
    argmax_candidate,
    decay_boundaries,
    diffusion,
    init_drift,
    max_routing,
    replay_trace,
    route,
    select_all,
    shuffle_prompts,
)
from .errors import (
    DDMRouteError,
    GenerationFailed,
    InvalidConfig,
    InvalidScore,
    MissingPlaceholder,
    RecordNotFound,
    ScoringFailed,
    UnknownTemplate,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryPair",
    "Candidate",
    "Decision",
    "EvidenceState",
    "ProviderSet",
    "RoutingConfig",
    "SourceItem",
    "StepKind",
    "TerminalCase",
    "TraceStep",
    "argmax_candidate",
    "decay_boundaries",
    "diffusion",
    "init_drift",
    "max_routing",
    "replay_trace",
    "route",
    "select_all",
    "shuffle_prompts",
    "DDMRouteError",
    "GenerationFailed",
    "InvalidConfig",
    "InvalidScore",
    "MissingPlaceholder",
    "RecordNotFound",
    "ScoringFailed",
    "UnknownTemplate",
]
