"""The inner loop: a generational evolutionary algorithm with pluggable
candidate proposers, tournament parent selection, diversity-aware survival
strategies, an oracle budget, and convergence detection.

All randomness flows through named, seed-derived streams (one per role) so
runs are reproducible regardless of evaluation concurrency.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence as Seq

import numpy as np

from .core import (
    Candidate,
    CandidatePayload,
    Direction,
    EngineError,
    Fingerprint,
    Objective,
    Origin,
    Population,
    Sequence,
    ValidationError,
)
from .scorers import EvalCounter, Evaluator, hamming, tanimoto

logger = logging.getLogger(__name__)


def derive_seed(seed: int, *tags: object) -> int:
    """Stable 64-bit sub-seed for a named stream."""
    material = ":".join([str(seed)] + [str(t) for t in tags])
    return int.from_bytes(hashlib.sha256(material.encode()).digest()[:8], "big")


def derive_rng(seed: int, *tags: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *tags))


class SelectionStrategy(str, Enum):
    TOP_K = "top_k"
    DIVERSE_TOP = "diverse_top"
    BUTINA_TOP = "butina_top"
    PARETO_THEN_RANK = "pareto_then_rank"
    KEEP_SELECTIVE_PLUS_DIVERSE = "keep_selective_plus_diverse"


@dataclass(frozen=True)
class ConvergenceConfig:
    window: int = 5
    min_improvement: float = 1e-6


@dataclass(frozen=True)
class InnerLoopConfig:
    population_size: int = 120
    offspring_per_generation: int = 70
    mutants_of_best: int = 7
    oracle_budget: int = 10_000
    tournament_size: int = 3
    elitism_fraction: float = 0.05
    selection: SelectionStrategy = SelectionStrategy.TOP_K
    similarity_cutoff: float = 0.4
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    max_generations: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.elitism_fraction < 1:
            raise ValidationError("elitism_fraction must lie in (0, 1)")
        if not 0 <= self.similarity_cutoff <= 1:
            raise ValidationError("similarity_cutoff must lie in [0, 1]")
        if self.offspring_per_generation + self.mutants_of_best <= 0:
            raise ValidationError("offspring + mutants per generation must be > 0")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "offspring_per_generation": self.offspring_per_generation,
            "mutants_of_best": self.mutants_of_best,
            "oracle_budget": self.oracle_budget,
            "tournament_size": self.tournament_size,
            "elitism_fraction": self.elitism_fraction,
            "selection": self.selection.value,
            "similarity_cutoff": self.similarity_cutoff,
            "convergence": {
                "window": self.convergence.window,
                "min_improvement": self.convergence.min_improvement,
            },
            "max_generations": self.max_generations,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InnerLoopConfig":
        conv = d.get("convergence", {})
        return cls(
            population_size=int(d.get("population_size", 120)),
            offspring_per_generation=int(d.get("offspring_per_generation", 70)),
            mutants_of_best=int(d.get("mutants_of_best", 7)),
            oracle_budget=int(d.get("oracle_budget", 10_000)),
            tournament_size=int(d.get("tournament_size", 3)),
            elitism_fraction=float(d.get("elitism_fraction", 0.05)),
            selection=SelectionStrategy(d.get("selection", "top_k")),
            similarity_cutoff=float(d.get("similarity_cutoff", 0.4)),
            convergence=ConvergenceConfig(
                window=int(conv.get("window", 5)),
                min_improvement=float(conv.get("min_improvement", 1e-6)),
            ),
            max_generations=int(d.get("max_generations", 50)),
            seed=int(d.get("seed", 0)),
        )


class IdAllocator:
    """Run-scoped monotonically increasing candidate ids (lexicographic = creation order)."""

    def __init__(self, prefix: str = "c", counter: int = 0):
        self.prefix = prefix
        self.counter = counter

    def next(self) -> str:
        self.counter += 1
        return f"{self.prefix}{self.counter:07d}"


# ---------------------------------------------------------------------------
# Proposers
# ---------------------------------------------------------------------------


class Proposer:
    """Generates candidate payloads; deterministic given an rng stream."""

    def propose_crossover(
        self, parents: list[Candidate], n: int, rng: np.random.Generator
    ) -> list[CandidatePayload]:
        raise NotImplementedError

    def propose_mutations(
        self, best: list[Candidate], n: int, rng: np.random.Generator
    ) -> list[CandidatePayload]:
        raise NotImplementedError

    def generate_random(self, n: int, rng: np.random.Generator) -> list[CandidatePayload]:
        raise NotImplementedError


class SequenceProposer(Proposer):
    """Single-point crossover plus uniform point mutations over fixed-length sequences."""

    def __init__(
        self,
        length: int,
        alphabet: str = "ACGT",
        flips_per_mutant: int = 1,
        flips_per_offspring: int = 0,
    ):
        self.length = length
        self.alphabet = alphabet
        self.flips_per_mutant = flips_per_mutant
        self.flips_per_offspring = flips_per_offspring

    def _flip(self, text: str, rng: np.random.Generator, flips: int) -> str:
        chars = list(text)
        for _ in range(flips):
            pos = int(rng.integers(0, len(chars)))
            alternatives = [c for c in self.alphabet if c != chars[pos]]
            chars[pos] = alternatives[int(rng.integers(0, len(alternatives)))]
        return "".join(chars)

    def propose_crossover(self, parents, n, rng):
        a, b = parents[0].payload.text, parents[1].payload.text
        out = []
        for _ in range(n):
            cut = int(rng.integers(1, self.length))
            child = a[:cut] + b[cut:]
            if self.flips_per_offspring:
                child = self._flip(child, rng, self.flips_per_offspring)
            out.append(Sequence(child))
        return out

    def propose_mutations(self, best, n, rng):
        return [
            Sequence(self._flip(best[i % len(best)].payload.text, rng, self.flips_per_mutant))
            for i in range(n)
        ]

    def generate_random(self, n, rng):
        letters = np.array(list(self.alphabet))
        return [
            Sequence("".join(letters[rng.integers(0, len(letters), size=self.length)]))
            for _ in range(n)
        ]


class HillClimbProposer(SequenceProposer):
    """Single-flip copies of the better parent / of the best; selection does the climbing."""

    def propose_crossover(self, parents, n, rng):
        better = min(parents, key=lambda c: (-(c.aggregate or 0.0), c.id))
        return [Sequence(self._flip(better.payload.text, rng, 1)) for _ in range(n)]

    def propose_mutations(self, best, n, rng):
        return [Sequence(self._flip(best[i % len(best)].payload.text, rng, 1)) for i in range(n)]


class BestCopyProposer(Proposer):
    """Returns exact copies of the current best payload; useful for stagnation tests."""

    def propose_crossover(self, parents, n, rng):
        better = min(parents, key=lambda c: (-(c.aggregate or 0.0), c.id))
        return [better.payload for _ in range(n)]

    def propose_mutations(self, best, n, rng):
        return [best[0].payload for _ in range(n)]

    def generate_random(self, n, rng):
        raise EngineError("BestCopyProposer cannot generate random payloads")


# ---------------------------------------------------------------------------
# Similarity
# ---------------------------------------------------------------------------


def payload_similarity(a: CandidatePayload, b: CandidatePayload) -> float:
    """Similarity in [0, 1]: Tanimoto for fingerprints, 1 - Hamming/len for sequences."""
    if isinstance(a, Fingerprint) and isinstance(b, Fingerprint):
        return tanimoto(a, b)
    if isinstance(a, Sequence) and isinstance(b, Sequence):
        return 1.0 - hamming(a.text, b.text) / len(a.text)
    raise EngineError(f"no similarity defined between {type(a).__name__} and {type(b).__name__}")


def candidate_similarity(a: Candidate, b: Candidate) -> float:
    return payload_similarity(a.payload, b.payload)


# ---------------------------------------------------------------------------
# Selection machinery
# ---------------------------------------------------------------------------


def rank_candidates(cands: Iterable[Candidate]) -> list[Candidate]:
    """Descending aggregate, ties broken by lexicographically smaller id."""
    out = list(cands)
    for c in out:
        if c.aggregate is None:
            raise EngineError(f"candidate {c.id!r} has no aggregate; evaluate before ranking")
    return sorted(out, key=lambda c: (-c.aggregate, c.id))


def tournament_select(pop: Population | Seq[Candidate], k: int, rng: np.random.Generator) -> Candidate:
    """Sample k distinct candidates uniformly; return the best by aggregate (ties: smaller id)."""
    cands = list(pop.candidates if isinstance(pop, Population) else pop)
    if not cands:
        raise EngineError("tournament over an empty population")
    size = min(k, len(cands))
    idx = rng.choice(len(cands), size=size, replace=False)
    picked = [cands[int(i)] for i in idx]
    return min(picked, key=lambda c: (-c.aggregate, c.id))


def diverse_top(
    ranked: list[Candidate],
    target: int,
    cutoff: float,
    similarity: Callable[[Candidate, Candidate], float] = candidate_similarity,
) -> list[Candidate]:
    """Greedy rank-order scan keeping a candidate only if its similarity to
    every already-kept survivor stays below the cutoff. May return fewer
    than target; preserves rank order."""
    survivors: list[Candidate] = []
    for cand in ranked:
        if len(survivors) >= target:
            break
        if all(similarity(cand, s) < cutoff for s in survivors):
            survivors.append(cand)
    return survivors


def butina_cluster(
    items: list,
    similarity: Callable,
    cutoff: float,
) -> list[list[int]]:
    """Iterated greedy sphere exclusion on indices into `items`.

    Repeatedly pick the remaining item with the most remaining neighbors
    (similarity >= cutoff, self excluded; ties go to the smaller index) as a
    centroid; its cluster is the centroid plus those neighbors. Returns a
    partition: disjoint index lists covering all items.
    """
    n = len(items)
    sim = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            sim[i][j] = sim[j][i] = similarity(items[i], items[j])
    remaining = set(range(n))
    clusters: list[list[int]] = []
    while remaining:
        best_i, best_neighbors = -1, None
        for i in sorted(remaining):
            neighbors = [j for j in sorted(remaining) if j != i and sim[i][j] >= cutoff]
            if best_neighbors is None or len(neighbors) > len(best_neighbors):
                best_i, best_neighbors = i, neighbors
        cluster = [best_i] + best_neighbors
        clusters.append(cluster)
        remaining -= set(cluster)
    return clusters


def butina_top(
    ranked: list[Candidate],
    cutoff: float,
    per_cluster: int = 1,
    similarity: Callable[[Candidate, Candidate], float] = candidate_similarity,
) -> list[Candidate]:
    """Cluster, take the `per_cluster` best of each cluster, concatenate by aggregate."""
    clusters = butina_cluster(ranked, similarity, cutoff)
    chosen: list[Candidate] = []
    for cluster in clusters:
        members = rank_candidates(ranked[i] for i in cluster)
        chosen.extend(members[:per_cluster])
    return rank_candidates(chosen)


def pareto_front(candidates: Seq[Candidate], objectives: list[Objective]) -> list[Candidate]:
    """Candidates not dominated on the listed non-filter objectives.

    Filter-failing candidates are excluded before dominance testing.
    Dominance: at least as good everywhere (respecting direction), strictly
    better somewhere.
    """
    non_filter = [o for o in objectives if not o.is_filter]
    filters = [o for o in objectives if o.is_filter]
    pool = [
        c
        for c in candidates
        if all(c.scores.get(f.id, 1.0) == 1.0 for f in filters)
    ]
    if not pool:
        return []
    signs = np.array([1.0 if o.direction is Direction.MAXIMIZE else -1.0 for o in non_filter])
    mat = np.array([[c.scores[o.id] for o in non_filter] for c in pool]) * signs
    ge = (mat[:, None, :] >= mat[None, :, :]).all(axis=2)
    gt = (mat[:, None, :] > mat[None, :, :]).any(axis=2)
    dominated = (ge & gt).any(axis=0)
    return [c for c, d in zip(pool, dominated) if not d]


def keep_selective_plus_diverse(
    candidates: Seq[Candidate],
    selectivity_filter: Objective,
    fraction: float = 0.5,
) -> list[Candidate]:
    """Keep all filter passers plus the top `fraction` of the rest ranked by
    their contribution to average pairwise Hamming distance (ties by id)."""
    texts = {c.id: c.payload.text for c in candidates}
    lengths = {len(t) for t in texts.values()}
    if len(lengths) > 1:
        raise EngineError("keep_selective_plus_diverse needs equal-length sequences")
    passers = [c for c in candidates if c.scores.get(selectivity_filter.id, 0.0) == 1.0]
    rest = [c for c in candidates if c.scores.get(selectivity_filter.id, 0.0) != 1.0]
    # total Hamming distance to all other members ranks identically to the
    # leave-one-in delta of the population's average pairwise distance
    contribution = {
        c.id: sum(hamming(texts[c.id], texts[o.id]) for o in candidates if o.id != c.id)
        for c in rest
    }
    keep_n = math.ceil(fraction * len(rest))
    diverse = sorted(rest, key=lambda c: (-contribution[c.id], c.id))[:keep_n]
    kept_ids = {c.id for c in passers} | {c.id for c in diverse}
    return [c for c in candidates if c.id in kept_ids]


def converged(best_history: Seq[float], window: int, min_improvement: float) -> bool:
    """True iff the best aggregate improved by less than min_improvement over the window."""
    if window < 1:
        raise ValidationError("convergence window must be >= 1")
    if len(best_history) < window + 1:
        return False
    return best_history[-1] - best_history[-1 - window] < min_improvement


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_aggregate: float
    mean_aggregate: float
    evaluations_used: int
    population_size: int
    objective_stats: dict

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "best_aggregate": self.best_aggregate,
            "mean_aggregate": self.mean_aggregate,
            "evaluations_used": self.evaluations_used,
            "population_size": self.population_size,
            "objective_stats": self.objective_stats,
        }


@dataclass
class InnerLoopResult:
    final: Population
    history: list[GenerationRecord]
    evaluations_used: int
    all_evaluated: list[Candidate]
    termination_reason: str


def _record(gen: int, pop: Population, counter: EvalCounter) -> GenerationRecord:
    aggs = [c.aggregate for c in pop.candidates]
    stats = {k: v.to_dict() for k, v in pop.stats().items()} if pop.candidates else {}
    return GenerationRecord(
        generation=gen,
        best_aggregate=max(aggs) if aggs else 0.0,
        mean_aggregate=sum(aggs) / len(aggs) if aggs else 0.0,
        evaluations_used=counter.candidate_wise,
        population_size=len(pop.candidates),
        objective_stats=stats,
    )


def _validate_payload(payload: object, template: CandidatePayload) -> Optional[CandidatePayload]:
    """Coerce/validate a proposer output against the run's domain; None if invalid."""
    try:
        if isinstance(template, Sequence):
            if isinstance(payload, str):
                payload = Sequence(payload.strip().upper(), template.alphabet)
            if not isinstance(payload, Sequence) or len(payload.text) != len(template.text):
                return None
            return Sequence(payload.text, template.alphabet)
        if isinstance(template, Fingerprint):
            if not isinstance(payload, Fingerprint) or payload.width != template.width:
                return None
            return payload
        return payload if isinstance(payload, type(template)) else None
    except (ValidationError, EngineError):
        return None


def _apply_selection(
    cfg: InnerLoopConfig,
    ranked_pool: list[Candidate],
    objectives: list[Objective],
    similarity: Callable[[Candidate, Candidate], float],
) -> list[Candidate]:
    target = cfg.population_size
    if cfg.selection is SelectionStrategy.TOP_K:
        return ranked_pool[:target]
    if cfg.selection is SelectionStrategy.DIVERSE_TOP:
        return diverse_top(ranked_pool, target, cfg.similarity_cutoff, similarity)
    if cfg.selection is SelectionStrategy.BUTINA_TOP:
        return butina_top(ranked_pool, cfg.similarity_cutoff, per_cluster=1, similarity=similarity)[
            :target
        ]
    if cfg.selection is SelectionStrategy.PARETO_THEN_RANK:
        front = rank_candidates(pareto_front(ranked_pool, objectives))
        if len(front) >= target:
            return front[:target]
        front_ids = {c.id for c in front}
        return front + [c for c in ranked_pool if c.id not in front_ids][: target - len(front)]
    if cfg.selection is SelectionStrategy.KEEP_SELECTIVE_PLUS_DIVERSE:
        filters = [o for o in objectives if o.is_filter]
        if not filters:
            raise EngineError("keep_selective_plus_diverse selection needs a filter objective")
        return keep_selective_plus_diverse(ranked_pool, filters[0])
    raise EngineError(f"unknown selection strategy {cfg.selection}")


def _pad_and_trim(
    selected: list[Candidate], ranked_pool: list[Candidate], target: int
) -> list[Candidate]:
    chosen = list(selected)
    chosen_ids = {c.id for c in chosen}
    for cand in ranked_pool:
        if len(chosen) >= target:
            break
        if cand.id not in chosen_ids:
            chosen.append(cand)
            chosen_ids.add(cand.id)
    return rank_candidates(chosen)[:target]


def _ensure_elites(
    selected: list[Candidate], elites: list[Candidate], target: int
) -> list[Candidate]:
    """Re-insert displaced elites, evicting the worst non-elites to keep size."""
    elite_ids = {e.id for e in elites}
    present = {c.id for c in selected}
    merged = rank_candidates(list(selected) + [e for e in elites if e.id not in present])
    overflow = len(merged) - target
    if overflow <= 0:
        return merged
    keep: list[Candidate] = []
    for c in reversed(merged):  # worst first
        if overflow > 0 and c.id not in elite_ids:
            overflow -= 1
            continue
        keep.append(c)
    keep.reverse()
    return keep[:target]


def run_inner_loop(
    initial: Population,
    objectives: list[Objective],
    proposer: Proposer,
    cfg: InnerLoopConfig,
    evaluator: Evaluator,
    id_allocator: Optional[IdAllocator] = None,
    counter: Optional[EvalCounter] = None,
    on_generation: Optional[Callable[[GenerationRecord], None]] = None,
    similarity: Callable[[Candidate, Candidate], float] = candidate_similarity,
) -> InnerLoopResult:
    """Run generations until budget exhaustion, max_generations, or convergence.

    Per generation: elites are carried unconditionally; parents come from
    size-k tournaments (two per mating event) feeding crossover, plus point
    mutations of the best candidates; every new candidate-wise evaluation
    decrements the oracle budget; survivors are picked by cfg.selection from
    the pool of current population plus new candidates.
    """
    alloc = id_allocator or IdAllocator()
    counter = counter or EvalCounter()
    rng_tournament = derive_rng(cfg.seed, "tournament")
    rng_proposer = derive_rng(cfg.seed, "proposer")

    iteration = initial.iteration
    template = initial.candidates[0].payload if initial.candidates else None
    if template is None:
        raise EngineError("inner loop needs a non-empty initial population")

    pop = evaluator.evaluate_population(initial, counter, budget=cfg.oracle_budget)
    if not pop.candidates:
        raise EngineError("no initial candidate survived evaluation")
    pop = Population(iteration, tuple(rank_candidates(pop.candidates)))
    all_evaluated: list[Candidate] = list(pop.candidates)
    known_ids = {c.id for c in pop.candidates}

    history = [_record(0, pop, counter)]
    if on_generation:
        on_generation(history[0])

    reason = "max_generations"
    gen = 0
    while True:
        if counter.candidate_wise >= cfg.oracle_budget:
            reason = "budget_exhausted"
            break
        if gen >= cfg.max_generations:
            reason = "max_generations"
            break
        if converged(
            [r.best_aggregate for r in history],
            cfg.convergence.window,
            cfg.convergence.min_improvement,
        ):
            reason = "converged"
            break
        gen += 1

        ranked = rank_candidates(pop.candidates)
        n_elites = math.ceil(cfg.elitism_fraction * cfg.population_size)
        elites = ranked[:n_elites]

        proposals: list[tuple[object, tuple[str, ...], str]] = []
        for _ in range(cfg.offspring_per_generation):
            p1 = tournament_select(ranked, cfg.tournament_size, rng_tournament)
            p2 = tournament_select(ranked, cfg.tournament_size, rng_tournament)
            for payload in proposer.propose_crossover([p1, p2], 1, rng_proposer):
                proposals.append((payload, (p1.id, p2.id), "crossover"))
        best_list = ranked[: max(1, cfg.mutants_of_best)]
        for i, payload in enumerate(
            proposer.propose_mutations(best_list, cfg.mutants_of_best, rng_proposer)
        ):
            proposals.append((payload, (best_list[i % len(best_list)].id,), "mutation"))

        new_cands: list[Candidate] = []
        for payload, parents, tag in proposals:
            valid = _validate_payload(payload, template)
            if valid is None:
                logger.info("dropping invalid %s payload from proposer", tag)
                continue
            new_cands.append(
                Candidate(
                    id=alloc.next(),
                    payload=valid,
                    origin=Origin(
                        iteration=iteration, generation=gen, parent_ids=parents, proposer_tag=tag
                    ),
                )
            )

        pool = Population(iteration, tuple(list(pop.candidates) + new_cands))
        evaluated = evaluator.evaluate_population(pool, counter, budget=cfg.oracle_budget)
        all_evaluated.extend(c for c in evaluated.candidates if c.id not in known_ids)
        known_ids |= {c.id for c in evaluated.candidates}

        ranked_pool = rank_candidates(evaluated.candidates)
        selected = _apply_selection(cfg, ranked_pool, objectives, similarity)
        selected = _pad_and_trim(selected, ranked_pool, cfg.population_size)
        survivors = _ensure_elites(selected, elites, cfg.population_size)
        pop = Population(iteration, tuple(survivors))

        record = _record(gen, pop, counter)
        history.append(record)
        if on_generation:
            on_generation(record)

    return InnerLoopResult(
        final=pop,
        history=history,
        evaluations_used=counter.candidate_wise,
        all_evaluated=all_evaluated,
        termination_reason=reason,
    )
