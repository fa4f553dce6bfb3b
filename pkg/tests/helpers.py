from __future__ import annotations

import numpy as np

from bilevo.core import (
    Candidate,
    Direction,
    Objective,
    ObjectiveKind,
    Origin,
    ScorerBinding,
    Sequence,
)


def make_objective(
    oid: str,
    kind: ObjectiveKind = ObjectiveKind.CANDIDATE_WISE,
    direction: Direction = Direction.MAXIMIZE,
    weight: float | None = None,
    binding: ScorerBinding | None = None,
) -> Objective:
    return Objective(
        id=oid,
        name=oid,
        description=f"test objective {oid}",
        kind=kind,
        direction=direction,
        weight=weight,
        scorer_binding=binding,
    )


def make_candidate(cid: str, text: str = "ACGT", scores=None, aggregate=None) -> Candidate:
    return Candidate(
        id=cid,
        payload=Sequence(text),
        origin=Origin(),
        scores=dict(scores or {}),
        aggregate=aggregate,
    )


def random_sequences(n: int, length: int, seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    letters = np.array(list("ACGT"))
    return ["".join(letters[rng.integers(0, 4, size=length)]) for _ in range(n)]
