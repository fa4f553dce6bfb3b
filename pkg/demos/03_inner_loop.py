"""The inner evolutionary loop on its own: a hill-climbing proposer pushes
20-mers toward the all-A optimum of a k=1 surrogate objective while elitism
keeps the best aggregate monotone.
"""

import tempfile
from pathlib import Path

from bilevo.core import (
    AggregationSpec,
    Candidate,
    Direction,
    Normalizer,
    Objective,
    ObjectiveKind,
    Population,
    ScorerBinding,
    Sequence,
)
from bilevo.optimizer import (
    ConvergenceConfig,
    HillClimbProposer,
    InnerLoopConfig,
    derive_rng,
    run_inner_loop,
)
from bilevo.scorers import Evaluator

workdir = Path(tempfile.mkdtemp(prefix="bilevo_demo_"))
(workdir / "count_a.txt").write_text("k=1 bias=0.0\nA 1.0\n")

objective = Objective(
    id="count_a",
    name="count of A",
    description="maximize the number of A bases",
    kind=ObjectiveKind.CANDIDATE_WISE,
    direction=Direction.MAXIMIZE,
    scorer_binding=ScorerBinding("kmer_surrogate_score", {"table_file": "count_a.txt"}),
)
evaluator = Evaluator(
    [objective],
    AggregationSpec(normalizers={"count_a": Normalizer(0, 20)}),
    base_dir=workdir,
)

rng = derive_rng(12, "init")
letters = list("ACGT")
initial = Population(
    0,
    tuple(
        Candidate(
            f"i{i:03d}",
            Sequence("".join(letters[int(rng.integers(0, 4))] for _ in range(20))),
        )
        for i in range(20)
    ),
)

cfg = InnerLoopConfig(
    population_size=20,
    offspring_per_generation=20,
    mutants_of_best=5,
    oracle_budget=2000,
    elitism_fraction=0.05,
    convergence=ConvergenceConfig(window=8, min_improvement=1e-9),
    max_generations=40,
    seed=12,
)

result = run_inner_loop(initial, [objective], HillClimbProposer(length=20), cfg, evaluator)

print(f"terminated: {result.termination_reason} after {len(result.history) - 1} generations, "
      f"{result.evaluations_used} evaluations")
print("gen  best    mean    size")
for record in result.history:
    print(f"{record.generation:3d}  {record.best_aggregate:.4f}  "
          f"{record.mean_aggregate:.4f}  {record.population_size}")

best = result.final.candidates[0]
print(f"\nbest candidate: {best.payload.text} (aggregate {best.aggregate:.4f})")
