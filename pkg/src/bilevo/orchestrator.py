"""The outer loop: initialization, plan/implement/optimize/analyze phases,
autonomy gates, the plan-implement retry loop, random injection, and final
retrospective selection.

One orchestrator owns one run's state machine. Every state mutation is
(append events, update state, persist atomically), so abandoning the
process at any persisted point and resuming from the run directory yields
the same event log as an uninterrupted run when backends are scripted.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

from .agents import (
    AgentError,
    AnalysisReport,
    AnalyzerRules,
    CompletionConfig,
    HttpCompletionClient,
    LlmAnalyzer,
    LlmMatcher,
    LlmPlanner,
    LlmProposer,
    LlmSelector,
    MatchResult,
    PlanProposal,
    ScheduledPlanner,
    ScriptedAnalyzer,
    ScriptedMatcher,
    ScriptedSelector,
    objective_from_record,
)
from .core import (
    AggregationSpec,
    Candidate,
    CandidatePayload,
    EngineError,
    Objective,
    Origin,
    Population,
    Sequence,
    ValidationError,
    payload_from_dict,
)
from .optimizer import (
    BestCopyProposer,
    HillClimbProposer,
    IdAllocator,
    InnerLoopConfig,
    Proposer,
    SequenceProposer,
    derive_rng,
    derive_seed,
    rank_candidates,
    run_inner_loop,
)
from .scorers import EvalCounter, Evaluator, ScorerRegistry, default_registry

logger = logging.getLogger(__name__)

PHASES = ("plan", "match", "optimize", "analyze", "select", "done")


class OrchestratorError(EngineError):
    """Raised for run-level configuration or lifecycle errors."""


class RunParked(Exception):
    """The run is blocked on an unresolved approval gate."""


class RunAborted(Exception):
    """The run was asked to stop by an operator."""


class SimulatedCrash(Exception):
    """Test hook: the process 'dies' right after a persisted point."""


class Mode(str, Enum):
    COPILOT = "copilot"
    SEMIPILOT = "semipilot"
    AUTOPILOT = "autopilot"


class RunStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    AWAITING_APPROVAL = "awaiting_approval"
    FINISHED = "finished"
    FAILED = "failed"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "random_sequence"
    length: int = 50
    count: int = 60
    alphabet: str = "ACGT"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "length": self.length, "count": self.count, "alphabet": self.alphabet}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GeneratorSpec":
        return cls(
            kind=d.get("kind", "random_sequence"),
            length=int(d.get("length", 50)),
            count=int(d.get("count", 60)),
            alphabet=d.get("alphabet", "ACGT"),
        )


@dataclass(frozen=True)
class RunConfig:
    goal: str
    context: str = ""
    mode: Mode = Mode.AUTOPILOT
    max_iterations: int = 3
    injection_ratio: float = 0.0
    plan_retry_limit: int = 3
    initial_objectives: tuple[Objective, ...] = ()
    initial_payloads: tuple[CandidatePayload, ...] = ()
    generator: Optional[GeneratorSpec] = None
    inner: InnerLoopConfig = field(default_factory=InnerLoopConfig)
    aggregation: AggregationSpec = field(default_factory=AggregationSpec)
    outer_seed: int = 0
    outer_loop_enabled: bool = True
    final_selection_n: int = 10
    max_objectives: int = 8
    run_id: Optional[str] = None
    base_dir: Optional[str] = None
    backends: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if not 0 <= self.injection_ratio <= 1:
            raise ValidationError("injection_ratio must lie in [0, 1]")
        if not self.goal:
            raise ValidationError("goal must be non-empty")
        if not self.initial_payloads and self.generator is None:
            raise ValidationError("provide initial_payloads or a generator spec")

    def resolved_run_id(self) -> str:
        return self.run_id or f"run-{derive_seed(self.outer_seed, self.goal) & 0xFFFFFFFF:08x}"

    def to_dict(self) -> dict:
        return {
            "goal": self.goal,
            "context": self.context,
            "mode": self.mode.value,
            "max_iterations": self.max_iterations,
            "injection_ratio": self.injection_ratio,
            "plan_retry_limit": self.plan_retry_limit,
            "initial_objectives": [o.to_dict() for o in self.initial_objectives],
            "initial_payloads": [p.to_dict() for p in self.initial_payloads],
            "generator": self.generator.to_dict() if self.generator else None,
            "inner": self.inner.to_dict(),
            "aggregation": self.aggregation.to_dict(),
            "outer_seed": self.outer_seed,
            "outer_loop_enabled": self.outer_loop_enabled,
            "final_selection_n": self.final_selection_n,
            "max_objectives": self.max_objectives,
            "run_id": self.run_id,
            "base_dir": self.base_dir,
            "backends": dict(self.backends),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        return cls(
            goal=d["goal"],
            context=d.get("context", ""),
            mode=Mode(d.get("mode", "autopilot")),
            max_iterations=int(d.get("max_iterations", 3)),
            injection_ratio=float(d.get("injection_ratio", 0.0)),
            plan_retry_limit=int(d.get("plan_retry_limit", 3)),
            initial_objectives=tuple(
                objective_from_record(o) if "scorer" in o else Objective.from_dict(o)
                for o in d.get("initial_objectives", [])
            ),
            initial_payloads=tuple(payload_from_dict(p) for p in d.get("initial_payloads", [])),
            generator=GeneratorSpec.from_dict(d["generator"]) if d.get("generator") else None,
            inner=InnerLoopConfig.from_dict(d.get("inner", {})),
            aggregation=AggregationSpec.from_dict(d.get("aggregation", {})),
            outer_seed=int(d.get("outer_seed", 0)),
            outer_loop_enabled=bool(d.get("outer_loop_enabled", True)),
            final_selection_n=int(d.get("final_selection_n", 10)),
            max_objectives=int(d.get("max_objectives", 8)),
            run_id=d.get("run_id"),
            base_dir=d.get("base_dir"),
            backends=dict(d.get("backends", {})),
        )


# ---------------------------------------------------------------------------
# Approval gates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GateResolution:
    action: str  # "accept" | "revise"
    payload: Optional[Mapping[str, Any]] = None
    resolver: str = "unknown"

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "payload": dict(self.payload) if self.payload else None,
            "resolver": self.resolver,
        }


class ApprovalChannel:
    """Where gate decisions come from. Returning None parks the run."""

    def request(self, gate: Mapping[str, Any]) -> Optional[GateResolution]:
        raise NotImplementedError


class NullChannel(ApprovalChannel):
    """Headless: always parks; resolutions arrive via the gate drop-box files."""

    def request(self, gate):
        return None


class AutoAcceptChannel(ApprovalChannel):
    def request(self, gate):
        return GateResolution(action="accept", resolver="auto")


class CallbackChannel(ApprovalChannel):
    def __init__(self, fn):
        self.fn = fn

    def request(self, gate):
        return self.fn(gate)


class QueueChannel(ApprovalChannel):
    """Blocks on an in-process queue; used by the HTTP service worker."""

    def __init__(self, timeout: Optional[float] = None):
        import queue

        self._queue: "queue.Queue[Optional[GateResolution]]" = queue.Queue()
        self.timeout = timeout
        self.waiting_gate: Optional[Mapping[str, Any]] = None

    def request(self, gate):
        import queue

        self.waiting_gate = gate
        try:
            return self._queue.get(timeout=self.timeout)
        except queue.Empty:
            return None
        finally:
            self.waiting_gate = None

    def submit(self, resolution: GateResolution) -> None:
        self._queue.put(resolution)


def validate_plan_payload(payload: Mapping[str, Any], max_objectives: int) -> PlanProposal:
    objectives = tuple(objective_from_record(r) for r in payload.get("objectives", []))
    proposal = PlanProposal(
        objectives=objectives,
        rationale=payload.get("rationale", ""),
        iteration=int(payload.get("iteration", 0)),
    )
    proposal.validate(max_objectives)
    return proposal


def validate_analysis_payload(payload: Mapping[str, Any]) -> AnalysisReport:
    report = AnalysisReport.from_dict(payload)
    report.validate()
    return report


# ---------------------------------------------------------------------------
# Event log
# ---------------------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class EventLog:
    """Append-only JSONL event records with strictly increasing seq numbers."""

    def __init__(self, path: Path, run_id: str, seq: int = 0):
        self.path = path
        self.run_id = run_id
        self.seq = seq

    def append(self, type_: str, iteration: int, data: Mapping[str, Any]) -> dict:
        self.seq += 1
        record = {
            "run_id": self.run_id,
            "seq": self.seq,
            "ts": _now(),
            "iteration": iteration,
            "type": type_,
            "data": data,
        }
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        return record

    def truncate_to(self, seq: int) -> None:
        """Drop torn records beyond the last persisted state (crash mid-phase)."""
        if not self.path.exists():
            return
        lines = self.path.read_text().splitlines()
        kept = [ln for ln in lines if ln.strip() and json.loads(ln)["seq"] <= seq]
        if len(kept) != len(lines):
            self.path.write_text("".join(ln + "\n" for ln in kept))
        self.seq = seq

    @staticmethod
    def read(path: Path, since: int = 0) -> list[dict]:
        if not path.exists():
            return []
        out = []
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            if record["seq"] > since:
                out.append(record)
        return out


# ---------------------------------------------------------------------------
# Run directory layout
# ---------------------------------------------------------------------------


class RunDir:
    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def config(self) -> Path:
        return self.root / "config.json"

    @property
    def state(self) -> Path:
        return self.root / "state.json"

    @property
    def events(self) -> Path:
        return self.root / "events.log"

    @property
    def archive(self) -> Path:
        return self.root / "archive.jsonl"

    def population(self, iteration: int) -> Path:
        return self.root / "populations" / f"iter_{iteration}.json"

    def iteration_record(self, iteration: int) -> Path:
        return self.root / "iterations" / f"iter_{iteration}.json"

    def gate(self, gate_id: str) -> Path:
        return self.root / "gates" / f"{gate_id}.json"

    def gate_resolution(self, gate_id: str) -> Path:
        return self.root / "gates" / f"{gate_id}.resolution.json"

    @property
    def final_candidates(self) -> Path:
        return self.root / "final" / "candidates.json"

    @property
    def transcripts(self) -> Path:
        return self.root / "transcripts"

    def write_json(self, path: Path, data: Any) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(data, indent=2, sort_keys=True))
        tmp.replace(path)

    def read_json(self, path: Path) -> Any:
        return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


@dataclass
class Backends:
    planner: Any
    matcher: Any
    analyzer: Any
    selector: Any
    proposer: Proposer


def build_backends(cfg: RunConfig, base_dir: Path, transcript_dir: Optional[Path] = None) -> Backends:
    spec = dict(cfg.backends)
    client = None

    def get_client():
        nonlocal client
        if client is None:
            llm = spec.get("llm", {})
            client = HttpCompletionClient(
                CompletionConfig(
                    endpoint=llm.get("endpoint", CompletionConfig.endpoint),
                    model=llm.get("model", "default"),
                    temperature=float(llm.get("temperature", 0.2)),
                    max_tokens=int(llm.get("max_tokens", 2048)),
                    timeout=float(llm.get("timeout", 60.0)),
                    max_retries=int(llm.get("max_retries", 3)),
                    api_key=llm.get("api_key"),
                ),
                transcript_dir=transcript_dir,
            )
        return client

    planner_spec = spec.get("planner", {"kind": "scripted"})
    if planner_spec.get("kind", "scripted") == "llm":
        planner = LlmPlanner(get_client(), max_objectives=cfg.max_objectives)
    else:
        schedule = planner_spec.get("schedule")
        if schedule is None and planner_spec.get("schedule_file"):
            planner = ScheduledPlanner.from_file(base_dir / planner_spec["schedule_file"])
        elif schedule is not None:
            planner = ScheduledPlanner(schedule)
        else:
            # no schedule: every iteration re-proposes the initial objectives
            planner = ScheduledPlanner(
                [
                    {"iteration": i, "objectives": [o.to_dict() for o in cfg.initial_objectives]}
                    for i in range(1, cfg.max_iterations + 1)
                ]
            )
            # Objective.to_dict carries scorer_binding; translate to wire records
            for entry in planner.by_iteration.values():
                for record in entry["objectives"]:
                    binding = record.pop("scorer_binding", None)
                    if binding:
                        record["scorer"] = binding

    matcher_spec = spec.get("matcher", {"kind": "scripted"})
    if matcher_spec.get("kind", "scripted") == "llm":
        matcher = LlmMatcher(get_client())
    else:
        matcher = ScriptedMatcher(threshold=float(matcher_spec.get("threshold", 0.5)))

    analyzer_spec = spec.get("analyzer", {"kind": "scripted"})
    rules = AnalyzerRules(
        eps=analyzer_spec.get("eps"),
        targets=analyzer_spec.get("targets", {}),
    )
    if analyzer_spec.get("kind", "scripted") == "llm":
        analyzer = LlmAnalyzer(get_client(), rules)
    else:
        analyzer = ScriptedAnalyzer(rules)

    selector_spec = spec.get("selector", {"kind": "scripted"})
    if selector_spec.get("kind", "scripted") == "llm":
        selector = LlmSelector(get_client())
    else:
        selector = ScriptedSelector()

    proposer_spec = spec.get("proposer", {"kind": "sequence"})
    length = proposer_spec.get("length")
    if length is None:
        if cfg.generator is not None:
            length = cfg.generator.length
        elif cfg.initial_payloads and isinstance(cfg.initial_payloads[0], Sequence):
            length = len(cfg.initial_payloads[0].text)
        else:
            length = 50
    kind = proposer_spec.get("kind", "sequence")
    if kind == "llm":
        proposer: Proposer = LlmProposer(get_client(), proposer_spec.get("payload_hint", "DNA sequence"))
    elif kind == "hillclimb":
        proposer = HillClimbProposer(length=int(length))
    elif kind == "best_copy":
        proposer = BestCopyProposer()
    else:
        proposer = SequenceProposer(
            length=int(length),
            flips_per_mutant=int(proposer_spec.get("flips_per_mutant", 1)),
            flips_per_offspring=int(proposer_spec.get("flips_per_offspring", 0)),
        )

    return Backends(planner=planner, matcher=matcher, analyzer=analyzer, selector=selector, proposer=proposer)


# ---------------------------------------------------------------------------
# Random injection
# ---------------------------------------------------------------------------


def generate_payloads(spec: GeneratorSpec, n: int, rng) -> list[CandidatePayload]:
    if spec.kind != "random_sequence":
        raise OrchestratorError(f"unknown generator kind {spec.kind!r}")
    import numpy as np

    letters = np.array(list(spec.alphabet))
    return [Sequence("".join(letters[rng.integers(0, len(letters), size=spec.length)])) for _ in range(n)]


def inject_random(
    pop: Population,
    ratio: float,
    generator: GeneratorSpec,
    rng,
    id_allocator: IdAllocator,
    iteration: int,
) -> tuple[Population, list[str]]:
    """Replace floor(ratio * N) uniformly chosen candidates with fresh unscored
    ones; every other position is preserved in order."""
    if not 0 <= ratio <= 1:
        raise OrchestratorError("injection ratio must lie in [0, 1]")
    n = len(pop.candidates)
    m = math.floor(ratio * n)
    if m == 0:
        return pop, []
    positions = sorted(int(i) for i in rng.choice(n, size=m, replace=False))
    payloads = generate_payloads(replace(generator, length=_payload_length(pop, generator)), m, rng)
    cands = list(pop.candidates)
    new_ids = []
    for pos, payload in zip(positions, payloads):
        cid = id_allocator.next()
        cands[pos] = Candidate(
            id=cid,
            payload=payload,
            origin=Origin(iteration=iteration, generation=0, parent_ids=(), proposer_tag="injection"),
        )
        new_ids.append(cid)
    return Population(iteration=pop.iteration, candidates=tuple(cands)), new_ids


def _payload_length(pop: Population, generator: GeneratorSpec) -> int:
    first = pop.candidates[0].payload if pop.candidates else None
    if isinstance(first, Sequence):
        return len(first.text)
    return generator.length


# ---------------------------------------------------------------------------
# Orchestrator
# ---------------------------------------------------------------------------


class Orchestrator:
    """Drives one run's phases; all progress is persisted under run_dir."""

    def __init__(
        self,
        run_dir: Path,
        cfg: RunConfig,
        state: dict,
        channel: Optional[ApprovalChannel] = None,
        registry: Optional[ScorerRegistry] = None,
        crash_after: Optional[int] = None,
        backends: Optional[Backends] = None,
    ):
        self.dirs = RunDir(run_dir)
        self.cfg = cfg
        self.state = state
        self.channel = channel or NullChannel()
        self.registry = registry or default_registry()
        self.base_dir = Path(cfg.base_dir) if cfg.base_dir else Path(run_dir)
        self.backends = backends or build_backends(cfg, self.base_dir, self.dirs.transcripts)
        self.events = EventLog(self.dirs.events, state["run_id"], seq=state["seq"])
        self.events.truncate_to(state["seq"])
        self.abort_flag = threading.Event()
        self._crash_after = crash_after
        self._persist_count = 0

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def create(
        cls,
        run_dir: Path,
        cfg: RunConfig,
        channel: Optional[ApprovalChannel] = None,
        registry: Optional[ScorerRegistry] = None,
        crash_after: Optional[int] = None,
        backends: Optional[Backends] = None,
    ) -> "Orchestrator":
        run_dir = Path(run_dir)
        dirs = RunDir(run_dir)
        if dirs.state.exists():
            raise OrchestratorError(f"run directory {run_dir} already holds a run; use resume")
        run_dir.mkdir(parents=True, exist_ok=True)

        if not cfg.outer_loop_enabled:
            if not cfg.initial_objectives:
                raise OrchestratorError("outer loop disabled but no initial objectives configured")
            for obj in cfg.initial_objectives:
                if obj.scorer_binding is None:
                    raise OrchestratorError(
                        f"outer loop disabled: initial objective {obj.id!r} must be fully bound"
                    )

        state = {
            "run_id": cfg.resolved_run_id(),
            "status": RunStatus.PENDING.value,
            "iteration": 1,
            "phase": "plan" if cfg.outer_loop_enabled else "optimize",
            "seq": 0,
            "id_counter": 0,
            "evaluations_total": 0,
            "plan_attempt": 0,
            "scratch": {},
            "pending_gate": None,
            "history_summaries": [],
            "current_objectives": None,
            "best_aggregate": None,
            "started_at": _now(),
            "updated_at": _now(),
            "error": None,
        }
        dirs.write_json(dirs.config, cfg.to_dict())
        orch = cls(run_dir, cfg, state, channel, registry, crash_after, backends)
        orch._phase0()
        return orch

    @classmethod
    def resume(
        cls,
        run_dir: Path,
        channel: Optional[ApprovalChannel] = None,
        registry: Optional[ScorerRegistry] = None,
        crash_after: Optional[int] = None,
    ) -> "Orchestrator":
        dirs = RunDir(Path(run_dir))
        if not dirs.state.exists():
            raise OrchestratorError(f"no run found under {run_dir}")
        cfg = RunConfig.from_dict(dirs.read_json(dirs.config))
        state = dirs.read_json(dirs.state)
        return cls(Path(run_dir), cfg, state, channel, registry, crash_after)

    def _phase0(self) -> None:
        """Build and persist the iteration-0 population; register objectives."""
        cfg = self.cfg
        alloc = self._allocator()
        if cfg.initial_payloads:
            payloads = list(cfg.initial_payloads)
        else:
            rng = derive_rng(cfg.outer_seed, "init")
            payloads = generate_payloads(cfg.generator, cfg.generator.count, rng)
        candidates = tuple(
            Candidate(id=alloc.next(), payload=p, origin=Origin(iteration=0, proposer_tag="init"))
            for p in payloads
        )
        pop = Population(iteration=0, candidates=candidates)
        self._save_population(pop)
        self._append_archive([c for c in candidates])
        if not cfg.outer_loop_enabled:
            self.state["current_objectives"] = [o.to_dict() for o in cfg.initial_objectives]
        self.events.append(
            "run_created",
            0,
            {
                "mode": cfg.mode.value,
                "outer_loop_enabled": cfg.outer_loop_enabled,
                "population_size": len(candidates),
                "initial_objectives": [o.id for o in cfg.initial_objectives],
            },
        )
        self.state["id_counter"] = alloc.counter
        self._persist()

    # -- helpers -----------------------------------------------------------

    def _allocator(self) -> IdAllocator:
        return IdAllocator(counter=self.state["id_counter"])

    def _persist(self) -> None:
        if self.abort_flag.is_set():
            raise RunAborted()
        self.state["seq"] = self.events.seq
        self.state["updated_at"] = _now()
        self.dirs.write_json(self.dirs.state, self.state)
        self._persist_count += 1
        if self._crash_after is not None and self._persist_count >= self._crash_after:
            raise SimulatedCrash(f"simulated crash at persist point {self._persist_count}")

    def _save_population(self, pop: Population) -> None:
        self.dirs.write_json(self.dirs.population(pop.iteration), pop.to_dict())

    def _load_population(self, iteration: int) -> Population:
        return Population.from_dict(self.dirs.read_json(self.dirs.population(iteration)))

    def _append_archive(self, candidates: list[Candidate]) -> None:
        self.dirs.archive.parent.mkdir(parents=True, exist_ok=True)
        with self.dirs.archive.open("a") as fh:
            for cand in candidates:
                fh.write(json.dumps(cand.to_dict(), separators=(",", ":")) + "\n")

    def _read_archive(self) -> list[Candidate]:
        if not self.dirs.archive.exists():
            return []
        by_id: dict[str, Candidate] = {}
        for line in self.dirs.archive.read_text().splitlines():
            if line.strip():
                cand = Candidate.from_dict(json.loads(line))
                by_id[cand.id] = cand  # keep the last record if a crash doubled one
        return list(by_id.values())

    def _current_objectives(self) -> list[Objective]:
        if not self.state["current_objectives"]:
            raise OrchestratorError("no bound objectives registered yet")
        return [Objective.from_dict(o) for o in self.state["current_objectives"]]

    def _evaluator(self, objectives: list[Objective]) -> Evaluator:
        return Evaluator(objectives, self.cfg.aggregation, base_dir=self.base_dir, registry=self.registry)

    # -- gates ---------------------------------------------------------------

    def _gate(self, stage: str, payload: Mapping[str, Any]) -> Mapping[str, Any]:
        """Open (or re-enter) a gate; block until resolved or park the run.

        Returns the effective payload (proposed on accept, revised payload
        on revise)."""
        iteration = self.state["iteration"]
        gate_id = f"g{iteration}_{stage}_{self.state['plan_attempt']}" if stage == "plan" else f"g{iteration}_{stage}"
        gate_record = {
            "gate_id": gate_id,
            "run_id": self.state["run_id"],
            "iteration": iteration,
            "stage": stage,
            "proposed_payload": dict(payload),
            "resolution": None,
        }
        pending = self.state.get("pending_gate")
        if pending is None or pending["gate_id"] != gate_id:
            self.dirs.write_json(self.dirs.gate(gate_id), gate_record)
            self.events.append(
                "gate_opened",
                iteration,
                {"gate_id": gate_id, "stage": stage, "proposed_payload": dict(payload)},
            )
            self.state["pending_gate"] = gate_record
            self.state["status"] = RunStatus.AWAITING_APPROVAL.value
            self._persist()
        else:
            gate_record = pending

        resolution = self.channel.request(gate_record)
        if resolution is None:
            resolution = self._dropbox_resolution(gate_id)
        if resolution is None:
            raise RunParked()

        effective = self._apply_resolution(stage, gate_record, resolution)
        gate_record = dict(gate_record)
        gate_record["resolution"] = {**resolution.to_dict(), "timestamp": _now()}
        self.dirs.write_json(self.dirs.gate(gate_id), gate_record)
        self.events.append(
            "gate_resolved",
            iteration,
            {
                "gate_id": gate_id,
                "stage": stage,
                "action": resolution.action,
                "resolver": resolution.resolver,
                "payload": dict(effective),
            },
        )
        self.state["pending_gate"] = None
        self.state["status"] = RunStatus.RUNNING.value
        self._persist()
        return effective

    def _dropbox_resolution(self, gate_id: str) -> Optional[GateResolution]:
        path = self.dirs.gate_resolution(gate_id)
        if not path.exists():
            return None
        raw = self.dirs.read_json(path)
        return GateResolution(
            action=raw["action"], payload=raw.get("payload"), resolver=raw.get("resolver", "cli")
        )

    def _apply_resolution(
        self, stage: str, gate_record: Mapping[str, Any], resolution: GateResolution
    ) -> Mapping[str, Any]:
        if resolution.action == "accept":
            return gate_record["proposed_payload"]
        if resolution.action != "revise":
            raise ValidationError(f"unknown gate action {resolution.action!r}")
        if resolution.payload is None:
            raise ValidationError("revise resolution needs a payload")
        if stage == "plan":
            revised = dict(gate_record["proposed_payload"])
            revised.update(resolution.payload)
            validate_plan_payload(revised, self.cfg.max_objectives)
            return revised
        revised = dict(gate_record["proposed_payload"])
        revised.update(resolution.payload)
        validate_analysis_payload(revised)
        return revised

    # -- phases --------------------------------------------------------------

    def advance(self) -> str:
        """Drive the run forward until it finishes, fails, or parks."""
        if self.state["status"] in (RunStatus.FINISHED.value, RunStatus.FAILED.value):
            return self.state["status"]
        self.state["status"] = RunStatus.RUNNING.value
        try:
            while self.state["phase"] != "done":
                phase = self.state["phase"]
                if phase == "plan":
                    self._phase_plan()
                elif phase == "match":
                    self._phase_match()
                elif phase == "optimize":
                    self._phase_optimize()
                elif phase == "analyze":
                    self._phase_analyze()
                elif phase == "select":
                    self._phase_select()
                else:
                    raise OrchestratorError(f"unknown phase {phase!r}")
            return self.state["status"]
        except RunParked:
            if self.abort_flag.is_set():
                return self._fail("aborted")
            self.state["status"] = RunStatus.AWAITING_APPROVAL.value
            self._persist_final()
            return self.state["status"]
        except RunAborted:
            return self._fail("aborted")
        except SimulatedCrash:
            raise
        except (EngineError, AgentError) as exc:
            logger.exception("run failed")
            return self._fail(str(exc))

    def _fail(self, error: str) -> str:
        self.events.append("run_failed", self.state["iteration"], {"error": error})
        self.state["status"] = RunStatus.FAILED.value
        self.state["error"] = error
        self.state["phase"] = "done"
        self._persist_final()
        return self.state["status"]

    def _persist_final(self) -> None:
        self.state["seq"] = self.events.seq
        self.state["updated_at"] = _now()
        self.dirs.write_json(self.dirs.state, self.state)

    def _phase_plan(self) -> None:
        iteration = self.state["iteration"]
        scratch = self.state["scratch"]
        if scratch.get("proposed_plan") is None:
            prior = (
                AnalysisReport.from_dict(scratch["prior_report"])
                if scratch.get("prior_report")
                else None
            )
            proposal = self.backends.planner.plan(
                self.cfg.goal,
                self.cfg.context,
                prior,
                self.registry,
                iteration,
                feedback=scratch.get("feedback", ""),
            )
            proposal.validate(self.cfg.max_objectives)
            plan_dict = proposal.to_dict()
            # planner wire records carry the hint under "scorer"
            for record in plan_dict["objectives"]:
                binding = record.pop("scorer_binding", None)
                if binding:
                    record["scorer"] = binding
            self.events.append(
                "plan_proposed",
                iteration,
                {"attempt": self.state["plan_attempt"], "plan": plan_dict},
            )
            scratch["proposed_plan"] = plan_dict
            self._persist()

        effective = scratch["proposed_plan"]
        if self.cfg.mode is Mode.COPILOT:
            effective = self._gate("plan", effective)

        resolved = validate_plan_payload(effective, self.cfg.max_objectives)
        dropped = []
        if self.state["current_objectives"]:
            previous_ids = {o["id"] for o in self.state["current_objectives"]}
            dropped = sorted(previous_ids - {o.id for o in resolved.objectives})
        self.events.append(
            "plan_resolved",
            iteration,
            {
                "objective_ids": [o.id for o in resolved.objectives],
                "dropped_objectives": dropped,
            },
        )
        scratch["plan"] = dict(effective, iteration=iteration)
        self.state["phase"] = "match"
        self._persist()

    def _phase_match(self) -> None:
        iteration = self.state["iteration"]
        scratch = self.state["scratch"]
        proposal = validate_plan_payload(scratch["plan"], self.cfg.max_objectives)
        result = self.backends.matcher.match_objectives(proposal, self.registry)
        self.events.append(
            "match_completed",
            iteration,
            {"attempt": self.state["plan_attempt"], "result": result.to_dict()},
        )
        if result.unmatched:
            if self.state["plan_attempt"] < self.cfg.plan_retry_limit:
                self.state["plan_attempt"] += 1
                scratch["feedback"] = "; ".join(
                    f"objective {oid!r} could not be matched: {reason}"
                    for oid, reason in result.unmatched
                )
                scratch["proposed_plan"] = None
                self.events.append(
                    "plan_retry",
                    iteration,
                    {"attempt": self.state["plan_attempt"], "unmatched": [list(u) for u in result.unmatched]},
                )
                self.state["phase"] = "plan"
                self._persist()
                return
            raise OrchestratorError(
                "plan retries exhausted with unmatched objectives: "
                + json.dumps(result.to_dict()["unmatched"])
            )

        bound = result.apply(proposal)
        self._evaluator(bound)  # validates bindings, kinds, and normalizers now
        self.state["current_objectives"] = [o.to_dict() for o in bound]
        scratch["match"] = result.to_dict()
        self.state["phase"] = "optimize"
        self._persist()

    def _phase_optimize(self) -> None:
        iteration = self.state["iteration"]
        cfg = self.cfg
        objectives = self._current_objectives()
        alloc = self._allocator()

        carried = self._load_population(iteration - 1)
        pop = Population(iteration=iteration, candidates=carried.candidates)

        injected_ids: list[str] = []
        if cfg.injection_ratio > 0:
            generator = cfg.generator or GeneratorSpec()
            rng = derive_rng(cfg.outer_seed, "inject", iteration)
            pop, injected_ids = inject_random(
                pop, cfg.injection_ratio, generator, rng, alloc, iteration
            )
        self.events.append(
            "injection",
            iteration,
            {"ratio": cfg.injection_ratio, "replaced": len(injected_ids), "new_ids": injected_ids},
        )

        evaluator = self._evaluator(objectives)
        pre_counter = EvalCounter()
        pop = evaluator.evaluate_population(pop, pre_counter)  # carried re-scoring, uncapped

        inner_cfg = InnerLoopConfig.from_dict(
            dict(cfg.inner.to_dict(), seed=derive_seed(cfg.outer_seed, "inner", iteration))
        )
        result = run_inner_loop(
            pop,
            objectives,
            self.backends.proposer,
            inner_cfg,
            evaluator,
            id_allocator=alloc,
            on_generation=lambda rec: self.events.append("generation", iteration, rec.to_dict()),
        )
        self._save_population(result.final)
        self._append_archive([c for c in result.all_evaluated if c.origin.iteration == iteration])

        iteration_evals = pre_counter.candidate_wise + result.evaluations_used
        best = result.final.candidates[0].aggregate if result.final.candidates else None
        self.events.append(
            "optimize_completed",
            iteration,
            {
                "generations": len(result.history) - 1,
                "evaluations": iteration_evals,
                "termination_reason": result.termination_reason,
                "best_aggregate": best,
            },
        )
        self.state["id_counter"] = alloc.counter
        self.state["evaluations_total"] += iteration_evals
        self.state["best_aggregate"] = best
        scratch = self.state["scratch"]
        scratch["generations"] = len(result.history) - 1
        scratch["iteration_evaluations"] = iteration_evals
        self.state["phase"] = "analyze" if cfg.outer_loop_enabled else "select"
        self._persist()

    def _phase_analyze(self) -> None:
        iteration = self.state["iteration"]
        scratch = self.state["scratch"]
        objectives = self._current_objectives()
        pop = self._load_population(iteration)

        if scratch.get("proposed_report") is None:
            report = self.backends.analyzer.analyze(
                pop, objectives, self.state["history_summaries"]
            )
            report.validate()
            self.events.append("analysis_completed", iteration, {"report": report.to_dict()})
            scratch["proposed_report"] = report.to_dict()
            self._persist()

        effective = scratch["proposed_report"]
        if self.cfg.mode in (Mode.COPILOT, Mode.SEMIPILOT):
            effective = self._gate("analysis", effective)
        report = validate_analysis_payload(effective)

        self.state["history_summaries"].append(
            {"iteration": iteration, "objective_stats": dict(report.objective_stats)}
        )
        record = {
            "iteration": iteration,
            "plan": scratch.get("plan"),
            "match_result": scratch.get("match"),
            "generations": scratch.get("generations", 0),
            "evaluations": scratch.get("iteration_evaluations", 0),
            "report": report.to_dict(),
            "population_ref": str(self.dirs.population(iteration).relative_to(self.dirs.root)),
        }
        self.dirs.write_json(self.dirs.iteration_record(iteration), record)
        self.events.append(
            "iteration_completed",
            iteration,
            {"termination": report.termination, "reason": report.termination_reason},
        )

        if report.termination == "stop" or iteration >= self.cfg.max_iterations:
            self.state["phase"] = "select"
        else:
            self.state["iteration"] = iteration + 1
            self.state["phase"] = "plan"
            self.state["plan_attempt"] = 0
            self.state["scratch"] = {"prior_report": report.to_dict()}
        self._persist()

    def _phase_select(self) -> None:
        iteration = self.state["iteration"]
        objectives = self._current_objectives()
        evaluator = self._evaluator(objectives)
        archive = self._read_archive()
        final = self.backends.selector.select_final(
            archive, self.cfg.goal, objectives, self.cfg.final_selection_n, evaluator
        )
        self.dirs.write_json(
            self.dirs.final_candidates,
            {"candidates": [c.to_dict() for c in final]},
        )
        self.events.append(
            "final_selected",
            iteration,
            {"candidate_ids": [c.id for c in final], "count": len(final)},
        )
        self.events.append("run_finished", iteration, {"status": "finished"})
        self.state["phase"] = "done"
        self.state["status"] = RunStatus.FINISHED.value
        self._persist()


# ---------------------------------------------------------------------------
# Headless gate resolution and run/alphaevolve entry points
# ---------------------------------------------------------------------------


def list_gates(run_dir: Path, status: Optional[str] = None) -> list[dict]:
    gates_dir = RunDir(Path(run_dir)).root / "gates"
    if not gates_dir.exists():
        return []
    out = []
    for path in sorted(gates_dir.glob("*.json")):
        if path.name.endswith(".resolution.json"):
            continue
        record = json.loads(path.read_text())
        is_open = record.get("resolution") is None
        if status == "open" and not is_open:
            continue
        if status == "resolved" and is_open:
            continue
        out.append(record)
    return out


def resolve_gate(run_dir: Path, gate_id: str, resolution: GateResolution) -> None:
    """Validate and record a headless gate resolution (picked up on resume)."""
    dirs = RunDir(Path(run_dir))
    gate_path = dirs.gate(gate_id)
    if not gate_path.exists():
        raise OrchestratorError(f"gate {gate_id!r} does not exist")
    record = json.loads(gate_path.read_text())
    if record.get("resolution") is not None or dirs.gate_resolution(gate_id).exists():
        raise OrchestratorError(f"gate {gate_id!r} already resolved")
    if resolution.action == "revise":
        cfg = RunConfig.from_dict(dirs.read_json(dirs.config))
        merged = dict(record["proposed_payload"])
        merged.update(resolution.payload or {})
        if record["stage"] == "plan":
            validate_plan_payload(merged, cfg.max_objectives)
        else:
            validate_analysis_payload(merged)
    elif resolution.action != "accept":
        raise ValidationError(f"unknown gate action {resolution.action!r}")
    dirs.write_json(dirs.gate_resolution(gate_id), resolution.to_dict())


def rerun_selection(run_dir: Path, n: int, registry: Optional[ScorerRegistry] = None) -> list[Candidate]:
    """Re-execute retrospective selection over the archive with a new n."""
    orch = Orchestrator.resume(run_dir, registry=registry)
    objectives = orch._current_objectives()
    evaluator = orch._evaluator(objectives)
    final = orch.backends.selector.select_final(
        orch._read_archive(), orch.cfg.goal, objectives, n, evaluator
    )
    orch.dirs.write_json(
        orch.dirs.final_candidates, {"candidates": [c.to_dict() for c in final]}
    )
    orch.events.append(
        "final_selected",
        orch.state["iteration"],
        {"candidate_ids": [c.id for c in final], "count": len(final), "resolver": "cli"},
    )
    orch._persist_final()
    return final


def run(
    run_dir: Path,
    cfg: RunConfig,
    channel: Optional[ApprovalChannel] = None,
    registry: Optional[ScorerRegistry] = None,
) -> str:
    """Create and drive a run to completion (or to its first unresolved gate)."""
    orch = Orchestrator.create(run_dir, cfg, channel, registry)
    return orch.advance()


def alphaevolve_mode(
    run_dir: Path,
    cfg: RunConfig,
    channel: Optional[ApprovalChannel] = None,
    registry: Optional[ScorerRegistry] = None,
) -> str:
    """Single inner-loop run on the fixed initial objectives; no planner or
    analyzer is ever invoked and no gate is ever created."""
    cfg = replace(cfg, outer_loop_enabled=False)
    return run(run_dir, cfg, channel, registry)
