"""Survival-selection machinery side by side: tournament draws, greedy
diversity (diverse_top), Butina sphere-exclusion clustering, the Pareto
front, and the keep-selective-plus-diverse rule for sequence populations.
"""

import numpy as np

from bilevo.core import Candidate, Direction, Objective, ObjectiveKind, Sequence
from bilevo.optimizer import (
    butina_cluster,
    butina_top,
    candidate_similarity,
    derive_rng,
    diverse_top,
    keep_selective_plus_diverse,
    pareto_front,
    rank_candidates,
    tournament_select,
)

rng = derive_rng(99, "demo")
letters = np.array(list("ACGT"))


def random_candidate(i: int, length: int = 30, scores=None) -> Candidate:
    text = "".join(letters[rng.integers(0, 4, size=length)])
    scores = scores or {}
    agg = float(rng.uniform())
    return Candidate(f"c{i:03d}", Sequence(text), scores=scores, aggregate=agg)


pop = [random_candidate(i) for i in range(30)]
ranked = rank_candidates(pop)

print("== size-3 tournament selection (10 draws) ==")
picks = [tournament_select(ranked, 3, rng).id for _ in range(10)]
print("  winners:", " ".join(picks))

print("\n== diverse_top: greedy rank scan, similarity < 0.75 between survivors ==")
survivors = diverse_top(ranked, 8, 0.75, candidate_similarity)
print(f"  kept {len(survivors)} of {len(ranked)}: {[c.id for c in survivors]}")

print("\n== Butina clustering on sequence similarity (cutoff 0.45) ==")
clusters = butina_cluster(ranked, candidate_similarity, 0.45)
sizes = sorted((len(c) for c in clusters), reverse=True)
print(f"  {len(clusters)} clusters, sizes {sizes}")
best_each = butina_top(ranked, 0.45, per_cluster=1, similarity=candidate_similarity)
print(f"  best of each cluster: {[c.id for c in best_each][:8]} ...")

print("\n== Pareto front over three objectives (maximize o1/o3, minimize o2) ==")
objectives = [
    Objective("o1", "o1", "", ObjectiveKind.CANDIDATE_WISE, Direction.MAXIMIZE),
    Objective("o2", "o2", "", ObjectiveKind.CANDIDATE_WISE, Direction.MINIMIZE),
    Objective("o3", "o3", "", ObjectiveKind.CANDIDATE_WISE, Direction.MAXIMIZE),
]
multi = [
    random_candidate(100 + i, scores={o.id: float(rng.uniform()) for o in objectives})
    for i in range(40)
]
front = pareto_front(multi, objectives)
print(f"  front holds {len(front)} of {len(multi)} candidates")
for c in front[:5]:
    print("   ", c.id, {k: round(v, 2) for k, v in c.scores.items()})

print("\n== keep all selectivity passers plus the top-50% diverse rest ==")
sel = Objective("sel", "sel", "", ObjectiveKind.FILTER, Direction.NOT_APPLICABLE)
gated = [
    Candidate(
        f"g{i:02d}",
        Sequence("".join(letters[rng.integers(0, 4, size=30)])),
        scores={"sel": 1.0 if i < 3 else 0.0},
        aggregate=float(rng.uniform()),
    )
    for i in range(12)
]
kept = keep_selective_plus_diverse(gated, sel, fraction=0.5)
print(f"  kept {len(kept)} of {len(gated)}: "
      f"{[c.id for c in kept]} (g00..g02 pass the filter)")
