"""Outer-loop agents: a planner that proposes objectives, an implementer
that matches them against the scoring-function registry, an analyzer that
reports on optimization progress, and a selector for final candidates.

Each agent has a deterministic scripted backend and an LLM-backed one that
talks through a minimal chat-completion client. Scripted backends are pure
functions of their inputs and config files. All numeric analysis is
computed in-process; language models only ever produce narrative text and
structured objective records.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence as Seq

from .core import (
    Candidate,
    Direction,
    EngineError,
    Objective,
    ObjectiveKind,
    Population,
    ScorerBinding,
    ValidationError,
    population_stats,
)
from .optimizer import Proposer, rank_candidates
from .scorers import EvalCounter, Evaluator, ScorerRegistry, default_registry

logger = logging.getLogger(__name__)


class AgentError(EngineError):
    """Raised when an agent cannot produce a valid output."""


# ---------------------------------------------------------------------------
# Data shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanProposal:
    objectives: tuple[Objective, ...]
    rationale: str
    iteration: int

    def validate(self, max_objectives: int = 8) -> None:
        ids = [o.id for o in self.objectives]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate objective ids in plan: {ids}")
        if len(ids) > max_objectives:
            raise ValidationError(f"plan proposes {len(ids)} objectives, cap is {max_objectives}")

    def to_dict(self) -> dict:
        return {
            "objectives": [o.to_dict() for o in self.objectives],
            "rationale": self.rationale,
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PlanProposal":
        return cls(
            objectives=tuple(Objective.from_dict(o) for o in d["objectives"]),
            rationale=d.get("rationale", ""),
            iteration=int(d["iteration"]),
        )


@dataclass(frozen=True)
class AnalysisReport:
    overview: str
    performance_analysis: str
    issues_and_concerns: str
    strategic_recommendations: str
    objective_stats: Mapping[str, dict]
    top_candidates: tuple[tuple[str, float], ...]
    termination: str  # "continue" | "stop"
    termination_reason: str

    def validate(self) -> None:
        for name in (
            "overview",
            "performance_analysis",
            "issues_and_concerns",
            "strategic_recommendations",
        ):
            if not getattr(self, name).strip():
                raise ValidationError(f"analysis report section {name!r} must be non-empty")
        if self.termination not in ("continue", "stop"):
            raise ValidationError(f"termination must be continue or stop, got {self.termination!r}")

    def to_dict(self) -> dict:
        return {
            "overview": self.overview,
            "performance_analysis": self.performance_analysis,
            "issues_and_concerns": self.issues_and_concerns,
            "strategic_recommendations": self.strategic_recommendations,
            "objective_stats": {k: dict(v) for k, v in self.objective_stats.items()},
            "top_candidates": [list(t) for t in self.top_candidates],
            "termination": self.termination,
            "termination_reason": self.termination_reason,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AnalysisReport":
        return cls(
            overview=d["overview"],
            performance_analysis=d["performance_analysis"],
            issues_and_concerns=d["issues_and_concerns"],
            strategic_recommendations=d["strategic_recommendations"],
            objective_stats=d.get("objective_stats", {}),
            top_candidates=tuple((t[0], float(t[1])) for t in d.get("top_candidates", [])),
            termination=d.get("termination", "continue"),
            termination_reason=d.get("termination_reason", ""),
        )


@dataclass(frozen=True)
class MatchResult:
    matched: tuple[tuple[str, str, dict], ...]  # (objective_id, descriptor_id, params)
    unmatched: tuple[tuple[str, str], ...]  # (objective_id, reason)

    def apply(self, proposal: PlanProposal) -> list[Objective]:
        """Return the proposal's objectives with matched bindings attached."""
        bindings = {oid: (did, params) for oid, did, params in self.matched}
        out = []
        for obj in proposal.objectives:
            did, params = bindings[obj.id]
            out.append(replace(obj, scorer_binding=ScorerBinding(did, params)))
        return out

    def to_dict(self) -> dict:
        return {
            "matched": [[oid, did, params] for oid, did, params in self.matched],
            "unmatched": [[oid, reason] for oid, reason in self.unmatched],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MatchResult":
        return cls(
            matched=tuple((m[0], m[1], dict(m[2])) for m in d.get("matched", [])),
            unmatched=tuple((u[0], u[1]) for u in d.get("unmatched", [])),
        )


# ---------------------------------------------------------------------------
# Completion client
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompletionConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "default"
    temperature: float = 0.2
    max_tokens: int = 2048
    timeout: float = 60.0
    max_retries: int = 3
    api_key: Optional[str] = None


class HttpCompletionClient:
    """Minimal chat-completion wire client; logs every exchange verbatim."""

    def __init__(self, config: CompletionConfig, transcript_dir: Optional[Path] = None):
        self.config = config
        self.transcript_dir = Path(transcript_dir) if transcript_dir else None
        self._seq = 0

    def complete(self, system: str, user: str, schema_tag: str) -> str:
        import httpx

        payload = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries):
            try:
                resp = httpx.post(
                    self.config.endpoint, json=payload, headers=headers, timeout=self.config.timeout
                )
                resp.raise_for_status()
                content = resp.json()["choices"][0]["message"]["content"]
                self._persist(schema_tag, payload, content)
                return content
            except Exception as exc:  # noqa: BLE001 - transport errors retried uniformly
                last_error = exc
                logger.warning("completion attempt %d failed: %s", attempt + 1, exc)
        raise AgentError(f"completion failed after {self.config.max_retries} attempts: {last_error}")

    def _persist(self, schema_tag: str, payload: dict, content: str) -> None:
        if self.transcript_dir is None:
            return
        self.transcript_dir.mkdir(parents=True, exist_ok=True)
        self._seq += 1
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]
        record = {"request": payload, "request_digest": digest, "response": content}
        path = self.transcript_dir / f"{self._seq:04d}_{schema_tag}.json"
        path.write_text(json.dumps(record, indent=2, sort_keys=True))


def extract_fenced(text: str, tag: str) -> Optional[str]:
    """Pull the body of a ```tag fenced block out of a completion."""
    m = re.search(rf"```{re.escape(tag)}\s*\n(.*?)```", text, flags=re.DOTALL)
    return m.group(1).strip() if m else None


# ---------------------------------------------------------------------------
# Objective record wire format
# ---------------------------------------------------------------------------


def objective_from_record(d: Mapping[str, Any]) -> Objective:
    """Parse an objective record: id, name, description, kind, direction,
    weight, and an optional scorer hint (descriptor id or {descriptor_id, params})."""
    hint = d.get("scorer")
    binding = None
    if isinstance(hint, str) and hint:
        binding = ScorerBinding(hint, {})
    elif isinstance(hint, Mapping):
        binding = ScorerBinding(hint["descriptor_id"], dict(hint.get("params", {})))
    kind = ObjectiveKind(d.get("kind", "candidate_wise"))
    direction = d.get("direction")
    if direction is None:
        direction = "not_applicable" if kind is ObjectiveKind.FILTER else "maximize"
    weight = d.get("weight")
    return Objective(
        id=d["id"],
        name=d.get("name", d["id"]),
        description=d.get("description", ""),
        kind=kind,
        direction=Direction(direction),
        weight=float(weight) if weight is not None else None,
        scorer_binding=binding,
    )


# ---------------------------------------------------------------------------
# Planner
# ---------------------------------------------------------------------------


class ScheduledPlanner:
    """Deterministic planner reading iteration-indexed objectives from a schedule.

    Schedule shape: [{iteration, rationale, objectives: [record, ...]}, ...].
    """

    def __init__(self, schedule: Seq[Mapping[str, Any]]):
        self.by_iteration: dict[int, Mapping[str, Any]] = {}
        for entry in schedule:
            self.by_iteration[int(entry["iteration"])] = entry

    @classmethod
    def from_file(cls, path: str | Path) -> "ScheduledPlanner":
        import yaml

        data = yaml.safe_load(Path(path).read_text())
        return cls(data)

    def plan(
        self,
        goal: str,
        context: str,
        prior_report: Optional[AnalysisReport],
        registry: ScorerRegistry,
        iteration: int,
        feedback: str = "",
    ) -> PlanProposal:
        if iteration not in self.by_iteration:
            raise AgentError(f"no plan for iteration {iteration}")
        entry = self.by_iteration[iteration]
        objectives = tuple(objective_from_record(r) for r in entry.get("objectives", []))
        return PlanProposal(
            objectives=objectives,
            rationale=entry.get("rationale", ""),
            iteration=iteration,
        )


PLANNER_SYSTEM = (
    "You decompose a scientific optimization goal into computable objectives. "
    "Respond with a fenced block:\n```objectives\n[{\"id\": ..., \"name\": ..., "
    "\"description\": ..., \"kind\": \"candidate_wise|population_wise|filter\", "
    "\"direction\": \"maximize|minimize|not_applicable\", \"weight\": null, "
    "\"scorer\": \"<descriptor id from the catalog, optional>\"}]\n```"
)


class LlmPlanner:
    def __init__(self, client, max_objectives: int = 8, max_retries: int = 3):
        self.client = client
        self.max_objectives = max_objectives
        self.max_retries = max_retries

    def plan(self, goal, context, prior_report, registry, iteration, feedback=""):
        catalog = "\n".join(
            f"- {d.descriptor_id} ({d.kind.value}): {d.description}" for d in registry.descriptors()
        )
        user = (
            f"Goal: {goal}\n\nContext: {context}\n\nIteration: {iteration}\n\n"
            f"Scoring function catalog:\n{catalog}\n"
        )
        if prior_report is not None:
            user += f"\nPrevious analysis report:\n{json.dumps(prior_report.to_dict(), indent=2)}\n"
        if feedback:
            user += f"\nImplementer feedback on the previous proposal:\n{feedback}\n"
        raw = ""
        for attempt in range(self.max_retries):
            raw = self.client.complete(PLANNER_SYSTEM, user, "plan")
            body = extract_fenced(raw, "objectives")
            if body is None:
                continue
            try:
                records = json.loads(body)
                objectives = tuple(objective_from_record(r) for r in records)
                proposal = PlanProposal(objectives, rationale=raw, iteration=iteration)
                proposal.validate(self.max_objectives)
                return proposal
            except (ValueError, KeyError, ValidationError) as exc:
                logger.warning("plan parse attempt %d failed: %s", attempt + 1, exc)
        raise AgentError(f"planner produced no parseable objectives; last response: {raw!r}")


# ---------------------------------------------------------------------------
# Implementer (registry matcher)
# ---------------------------------------------------------------------------

_WORD_RE = re.compile(r"[a-z0-9_]+")
_PARAM_RE = re.compile(r"\b([a-z_][a-z0-9_]*)=([^\s,;]+)")


def _tokens(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.lower()))


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def _params_from_description(description: str, descriptor) -> dict:
    out: dict[str, Any] = {}
    for key, raw in _PARAM_RE.findall(description.lower()):
        if key not in descriptor.param_schema:
            continue
        try:
            out[key] = float(raw) if descriptor.param_schema[key].type in ("float", "int") else raw
            if descriptor.param_schema[key].type == "int":
                out[key] = int(out[key])
        except ValueError:
            out[key] = raw
    return out


class ScriptedMatcher:
    """Matches objectives to descriptors by explicit hint, verbatim mention,
    or token-overlap (Jaccard) between descriptions above a threshold."""

    def __init__(self, threshold: float = 0.5):
        self.threshold = threshold

    def match_objectives(self, proposal: PlanProposal, registry: ScorerRegistry) -> MatchResult:
        if not registry.descriptors():
            raise AgentError("registry must be non-empty")
        matched: list[tuple[str, str, dict]] = []
        unmatched: list[tuple[str, str]] = []
        for obj in proposal.objectives:
            outcome = self._match_one(obj, registry)
            if isinstance(outcome, tuple):
                matched.append((obj.id, outcome[0], outcome[1]))
            else:
                unmatched.append((obj.id, outcome))
        return MatchResult(matched=tuple(matched), unmatched=tuple(unmatched))

    def _bind_params(self, obj: Objective, descriptor, hint_params: Mapping | None) -> dict:
        params = {k: spec.default for k, spec in descriptor.param_schema.items()}
        params.update(_params_from_description(obj.description, descriptor))
        if hint_params:
            params.update(hint_params)
        return {k: v for k, v in params.items() if v is not None}

    def _match_one(self, obj: Objective, registry: ScorerRegistry):
        # 1. explicit scorer hint
        if obj.scorer_binding is not None:
            did = obj.scorer_binding.descriptor_id
            if did in registry:
                descriptor = registry.descriptor(did)
                if descriptor.kind is not obj.kind:
                    return (
                        f"kind mismatch: hint {did!r} is {descriptor.kind.value}, "
                        f"objective is {obj.kind.value}"
                    )
                return did, self._bind_params(obj, descriptor, obj.scorer_binding.params)
        # 2. verbatim descriptor id mention in the description
        desc_tokens = _tokens(obj.description)
        for descriptor in sorted(registry.descriptors(), key=lambda d: d.descriptor_id):
            if descriptor.descriptor_id in desc_tokens and descriptor.kind is obj.kind:
                return descriptor.descriptor_id, self._bind_params(obj, descriptor, None)
        # 3. token overlap above threshold, ties -> higher overlap then lexicographic id
        best: tuple[float, str] | None = None
        for descriptor in registry.descriptors():
            if descriptor.kind is not obj.kind:
                continue
            overlap = _jaccard(desc_tokens, _tokens(descriptor.description))
            key = (overlap, descriptor.descriptor_id)
            if overlap >= self.threshold and (
                best is None or overlap > best[0] or (overlap == best[0] and key[1] < best[1])
            ):
                best = key
        if best is None:
            return "no descriptor above threshold"
        descriptor = registry.descriptor(best[1])
        return best[1], self._bind_params(obj, descriptor, None)


MATCHER_SYSTEM = (
    "You decide whether an optimization objective is implemented by a scoring "
    "function. Answer inside a fenced block:\n```match\nyes\n``` or ```match\nno\n```"
)


class LlmMatcher:
    """Pairwise yes/no matching prompts; first affirmative in registry order wins."""

    def __init__(self, client, fallback: Optional[ScriptedMatcher] = None):
        self.client = client
        self.fallback = fallback or ScriptedMatcher()

    def match_objectives(self, proposal: PlanProposal, registry: ScorerRegistry) -> MatchResult:
        if not registry.descriptors():
            raise AgentError("registry must be non-empty")
        matched: list[tuple[str, str, dict]] = []
        unmatched: list[tuple[str, str]] = []
        for obj in proposal.objectives:
            hit = None
            for descriptor in registry.descriptors():
                if descriptor.kind is not obj.kind:
                    continue
                user = (
                    f"Objective: {obj.name}\nDescription: {obj.description}\n\n"
                    f"Scoring function: {descriptor.descriptor_id}\n"
                    f"Description: {descriptor.description}\n\nDoes the scoring function "
                    "implement this objective?"
                )
                answer = extract_fenced(self.client.complete(MATCHER_SYSTEM, user, "match"), "match")
                if answer and answer.strip().lower().startswith("yes"):
                    hit = descriptor
                    break
            if hit is None:
                unmatched.append((obj.id, "no descriptor affirmed"))
            else:
                params = self.fallback._bind_params(obj, hit, getattr(obj.scorer_binding, "params", None))
                matched.append((obj.id, hit.descriptor_id, params))
        return MatchResult(matched=tuple(matched), unmatched=tuple(unmatched))


# ---------------------------------------------------------------------------
# Analyzer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyzerRules:
    """Scripted termination rules: target bands per objective, or a
    no-objective-improved-more-than-eps stop (direction-aware)."""

    eps: Optional[float] = None
    targets: Mapping[str, Mapping[str, float]] = field(default_factory=dict)


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def compute_objective_stats(
    pop: Population,
    objectives: Seq[Objective],
    previous: Optional[Mapping[str, Mapping[str, float]]] = None,
) -> dict[str, dict]:
    stats = population_stats(pop)
    out: dict[str, dict] = {}
    for obj in objectives:
        if obj.id not in stats:
            raise AgentError(f"objective {obj.id!r} has no scores in the population")
        s = stats[obj.id]
        entry = {"mean": s.mean, "std": s.std, "min": s.min, "max": s.max}
        if previous and obj.id in previous:
            entry["delta_vs_previous"] = s.mean - previous[obj.id]["mean"]
        out[obj.id] = entry
    return out


def _improved(obj: Objective, delta: float) -> float:
    """Signed improvement for the objective's direction."""
    return delta if obj.direction is not Direction.MINIMIZE else -delta


class ScriptedAnalyzer:
    """Deterministic analyzer: numeric stats plus a template narrative whose
    every numeral is drawn from those stats."""

    def __init__(self, rules: Optional[AnalyzerRules] = None, top_n: int = 5):
        self.rules = rules or AnalyzerRules()
        self.top_n = top_n

    def analyze(
        self,
        pop: Population,
        objectives: Seq[Objective],
        history: Seq[Mapping[str, Any]],
    ) -> AnalysisReport:
        previous = history[-1]["objective_stats"] if history else None
        stats = compute_objective_stats(pop, objectives, previous)
        ranked = rank_candidates(pop.candidates)
        top = tuple((c.id, float(c.aggregate)) for c in ranked[: self.top_n])

        termination, reason = self._termination(objectives, stats, previous)

        lines_overview = [
            f"objective {obj.id} has mean {_fmt(stats[obj.id]['mean'])} "
            f"with extremes {_fmt(stats[obj.id]['min'])} to {_fmt(stats[obj.id]['max'])}"
            for obj in objectives
        ]
        overview = (
            "The population was scored on every active objective; "
            + "; ".join(lines_overview)
            + "."
        )

        perf_lines = []
        for obj in objectives:
            entry = stats[obj.id]
            if "delta_vs_previous" in entry:
                perf_lines.append(
                    f"objective {obj.id} mean moved by {_fmt(entry['delta_vs_previous'])} "
                    f"versus the previous iteration (std now {_fmt(entry['std'])})"
                )
            else:
                perf_lines.append(
                    f"objective {obj.id} has no prior iteration to compare against "
                    f"(std {_fmt(entry['std'])})"
                )
        performance = "; ".join(perf_lines) + "."

        spreads = [
            f"objective {obj.id} spread spans {_fmt(stats[obj.id]['max'] - stats[obj.id]['min'])}"
            for obj in objectives
        ]
        issues = (
            "Remaining concerns center on score dispersion: " + "; ".join(spreads) + ". "
            "Objectives whose spread stays wide may need tighter constraints or reweighting."
        )

        if termination == "stop":
            recommendation = (
                "Optimization criteria are satisfied under the scripted rules; "
                "recommend stopping and moving to final selection."
            )
        else:
            worst = min(
                objectives, key=lambda o: _improved(o, stats[o.id].get("delta_vs_previous", 0.0))
            )
            recommendation = (
                f"Continue optimizing; objective {worst.id} shows the weakest progress and is "
                "the first candidate for revised weighting or an additional constraint."
            )

        report = AnalysisReport(
            overview=overview,
            performance_analysis=performance,
            issues_and_concerns=issues,
            strategic_recommendations=recommendation,
            objective_stats=stats,
            top_candidates=top,
            termination=termination,
            termination_reason=reason,
        )
        report.validate()
        return report

    def _termination(self, objectives, stats, previous) -> tuple[str, str]:
        if self.rules.targets:
            hit = True
            for oid, band in self.rules.targets.items():
                mean = stats.get(oid, {}).get("mean")
                if mean is None:
                    hit = False
                    break
                if "min" in band and mean < band["min"]:
                    hit = False
                if "max" in band and mean > band["max"]:
                    hit = False
            if hit:
                return "stop", "all objective means are inside their configured target bands"
        if self.rules.eps is not None and previous:
            improvements = [
                _improved(obj, stats[obj.id].get("delta_vs_previous", 0.0))
                for obj in objectives
                if "delta_vs_previous" in stats[obj.id]
            ]
            if improvements and max(improvements) <= self.rules.eps:
                return "stop", "converged: no objective mean improved beyond epsilon"
        return "continue", "objectives still improving or no stop rule fired"


ANALYZER_SYSTEM = (
    "You write a four-section optimization progress report. Respond with a fenced "
    "block:\n```report\n{\"overview\": ..., \"performance_analysis\": ..., "
    "\"issues_and_concerns\": ..., \"strategic_recommendations\": ..., "
    "\"termination\": \"continue|stop\", \"termination_reason\": ...}\n```\n"
    "Use only the numbers given to you."
)


class LlmAnalyzer:
    """LLM narrative over in-process numeric stats; falls back to the
    scripted template if the narrative cannot be parsed."""

    def __init__(self, client, rules: Optional[AnalyzerRules] = None):
        self.client = client
        self.scripted = ScriptedAnalyzer(rules)

    def analyze(self, pop, objectives, history):
        base = self.scripted.analyze(pop, objectives, history)
        user = (
            f"Objective statistics:\n{json.dumps(dict(base.objective_stats), indent=2)}\n\n"
            f"Top candidates: {json.dumps([list(t) for t in base.top_candidates])}\n\n"
            f"Scripted termination suggestion: {base.termination} ({base.termination_reason})"
        )
        try:
            raw = self.client.complete(ANALYZER_SYSTEM, user, "analysis")
            body = extract_fenced(raw, "report")
            if body is None:
                raise AgentError("no fenced report block")
            parsed = json.loads(body)
            report = AnalysisReport(
                overview=parsed["overview"],
                performance_analysis=parsed["performance_analysis"],
                issues_and_concerns=parsed["issues_and_concerns"],
                strategic_recommendations=parsed["strategic_recommendations"],
                objective_stats=base.objective_stats,
                top_candidates=base.top_candidates,
                termination=parsed.get("termination", base.termination),
                termination_reason=parsed.get("termination_reason", base.termination_reason),
            )
            report.validate()
            return report
        except Exception as exc:  # noqa: BLE001 - any narrative failure degrades to template
            logger.warning("LLM analyzer degraded to template narrative: %s", exc)
            return base


# ---------------------------------------------------------------------------
# Selector
# ---------------------------------------------------------------------------


class ScriptedSelector:
    """Re-scores every candidate under the final objective set, ranks by
    aggregate, deduplicates identical payloads (earliest id wins)."""

    def select_final(
        self,
        all_candidates: Seq[Candidate],
        goal: str,
        objectives: Seq[Objective],
        n: int,
        evaluator: Evaluator,
    ) -> list[Candidate]:
        if n < 1:
            raise AgentError("final selection size must be >= 1")
        pool = Population(iteration=-1, candidates=tuple(all_candidates))
        scored = evaluator.evaluate_population(pool, EvalCounter())
        seen: dict[tuple, Candidate] = {}
        for cand in sorted(scored.candidates, key=lambda c: c.id):
            key = cand.payload.key()
            if key not in seen:
                seen[key] = cand
        ranked = rank_candidates(seen.values())
        if n > len(ranked):
            logger.info("final selection shortfall: asked %d, only %d distinct", n, len(ranked))
        return ranked[:n]


SELECTOR_SYSTEM = (
    "You pick the best final candidates for a discovery goal. Respond with a fenced "
    "block:\n```selection\n[\"candidate_id\", ...]\n```"
)


class LlmSelector:
    """LLM re-ranking over the scripted top 3n; falls back to scripted order."""

    def __init__(self, client):
        self.client = client
        self.scripted = ScriptedSelector()

    def select_final(self, all_candidates, goal, objectives, n, evaluator):
        shortlist = self.scripted.select_final(all_candidates, goal, objectives, 3 * n, evaluator)
        listing = "\n".join(
            f"- {c.id}: aggregate {c.aggregate:.6f}, scores {json.dumps(dict(c.scores))}"
            for c in shortlist
        )
        user = f"Goal: {goal}\n\nCandidates:\n{listing}\n\nReturn the best {n} ids, best first."
        try:
            raw = self.client.complete(SELECTOR_SYSTEM, user, "selection")
            body = extract_fenced(raw, "selection")
            ids = json.loads(body) if body else []
            by_id = {c.id: c for c in shortlist}
            picked = [by_id[i] for i in ids if i in by_id][:n]
            if picked:
                rest = [c for c in shortlist if c.id not in {p.id for p in picked}]
                return (picked + rest)[:n]
        except Exception as exc:  # noqa: BLE001
            logger.warning("LLM selector degraded to scripted ranking: %s", exc)
        return shortlist[:n]


# ---------------------------------------------------------------------------
# LLM-backed proposer for the inner loop
# ---------------------------------------------------------------------------

PROPOSER_SYSTEM = (
    "You propose new candidate payloads for an evolutionary search. Respond with a "
    "fenced block:\n```payloads\n[\"...\", ...]\n```"
)


class LlmProposer(Proposer):
    """Inner-loop proposer that asks a language model for payload batches;
    unparseable responses drop the batch (the loop tolerates empty batches)."""

    def __init__(self, client, payload_hint: str = "DNA sequence"):
        self.client = client
        self.payload_hint = payload_hint

    def _ask(self, prompt: str, n: int) -> list:
        raw = self.client.complete(PROPOSER_SYSTEM, prompt, "proposal")
        body = extract_fenced(raw, "payloads")
        if body is None:
            logger.warning("proposer response had no payloads block; dropping batch")
            return []
        try:
            items = json.loads(body)
            return items[:n] if isinstance(items, list) else []
        except ValueError:
            logger.warning("proposer payloads block was not valid JSON; dropping batch")
            return []

    def _describe(self, cands: Seq[Candidate]) -> str:
        return "\n".join(
            f"- {c.payload.text if hasattr(c.payload, 'text') else c.payload}: "
            f"aggregate {c.aggregate:.6f}, scores {json.dumps(dict(c.scores))}"
            for c in cands
        )

    def propose_crossover(self, parents, n, rng):
        prompt = (
            f"Combine features of these parent {self.payload_hint}s into {n} new one(s):\n"
            + self._describe(parents)
        )
        return self._ask(prompt, n)

    def propose_mutations(self, best, n, rng):
        prompt = (
            f"Propose {n} small variations of these top {self.payload_hint}s:\n"
            + self._describe(best)
        )
        return self._ask(prompt, n)

    def generate_random(self, n, rng):
        return self._ask(f"Propose {n} fresh random {self.payload_hint}s.", n)
