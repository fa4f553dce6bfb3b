"""bilevo: a bi-level, goal-evolving optimization engine.

An outer loop of pluggable agents proposes, binds, and revises optimization
objectives across iterations; an inner evolutionary loop optimizes candidate
solutions against the currently bound objectives, under three human-autonomy
modes (copilot, semipilot, autopilot).
"""

__version__ = "0.1.0"

from .core import (
    AggregationMethod,
    AggregationSpec,
    Attributes,
    Candidate,
    Direction,
    Fingerprint,
    Normalizer,
    Objective,
    ObjectiveKind,
    Population,
    ScorerBinding,
    Sequence,
    aggregate,
    population_stats,
)
from .optimizer import (
    InnerLoopConfig,
    Proposer,
    SelectionStrategy,
    SequenceProposer,
    run_inner_loop,
)
from .orchestrator import (
    GeneratorSpec,
    Mode,
    Orchestrator,
    RunConfig,
    alphaevolve_mode,
    run,
)
from .scorers import Evaluator, default_registry

__all__ = [
    "AggregationMethod",
    "AggregationSpec",
    "Attributes",
    "Candidate",
    "Direction",
    "Evaluator",
    "Fingerprint",
    "GeneratorSpec",
    "InnerLoopConfig",
    "Mode",
    "Normalizer",
    "Objective",
    "ObjectiveKind",
    "Orchestrator",
    "Population",
    "Proposer",
    "RunConfig",
    "ScorerBinding",
    "SelectionStrategy",
    "Sequence",
    "SequenceProposer",
    "aggregate",
    "alphaevolve_mode",
    "default_registry",
    "population_stats",
    "run",
    "run_inner_loop",
]
