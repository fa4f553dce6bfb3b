"""Shared domain types: candidates, objectives, populations, score aggregation.

Everything here is an immutable value; evolution and agents construct
successor values instead of mutating in place, so instances are safe to
share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, Union

DNA_ALPHABET = "ACGT"

_NORMALIZER_TOL = 1e-9


class EngineError(Exception):
    """Base class for errors raised by the engine."""


class ValidationError(EngineError):
    """Raised when a domain value violates its invariants."""


class AggregationError(EngineError):
    """Raised when scores cannot be aggregated under the active objectives."""


class ObjectiveKind(str, Enum):
    CANDIDATE_WISE = "candidate_wise"
    POPULATION_WISE = "population_wise"
    FILTER = "filter"


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"
    NOT_APPLICABLE = "not_applicable"


class AggregationMethod(str, Enum):
    SIMPLE_PRODUCT = "simple_product"
    WEIGHTED_SUM = "weighted_sum"


# ---------------------------------------------------------------------------
# Candidate payloads
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sequence:
    """An upper-case string over a fixed alphabet (DNA by default)."""

    text: str
    alphabet: str = DNA_ALPHABET

    def __post_init__(self) -> None:
        if not self.text:
            raise ValidationError("sequence text must be non-empty")
        allowed = set(self.alphabet)
        bad = set(self.text) - allowed
        if bad:
            raise ValidationError(
                f"sequence contains characters outside alphabet {self.alphabet!r}: {sorted(bad)}"
            )

    def __len__(self) -> int:
        return len(self.text)

    def key(self) -> tuple:
        return ("sequence", self.text)

    def to_dict(self) -> dict:
        return {"kind": "sequence", "text": self.text, "alphabet": self.alphabet}


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-width bit vector stored as an int mask."""

    bits: int
    width: int

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ValidationError("fingerprint width must be > 0")
        if self.bits < 0 or self.bits >> self.width:
            raise ValidationError("fingerprint bits exceed declared width")

    @classmethod
    def from_hex(cls, hex_str: str, width: int) -> "Fingerprint":
        return cls(bits=int(hex_str, 16), width=width)

    def to_hex(self) -> str:
        ndigits = (self.width + 3) // 4
        return f"{self.bits:0{ndigits}x}"

    def popcount(self) -> int:
        return bin(self.bits).count("1")

    def key(self) -> tuple:
        return ("fingerprint", self.width, self.bits)

    def to_dict(self) -> dict:
        return {"kind": "fingerprint", "bits": self.to_hex(), "width": self.width}


@dataclass(frozen=True)
class Attributes:
    """A flat map of named real-valued properties."""

    values: Mapping[str, float]

    def get(self, key: str) -> float:
        if key not in self.values:
            raise ValidationError(f"attribute not present: {key!r}")
        return float(self.values[key])

    def key(self) -> tuple:
        return ("attributes", tuple(sorted(self.values.items())))

    def to_dict(self) -> dict:
        return {"kind": "attributes", "values": dict(self.values)}


CandidatePayload = Union[Sequence, Fingerprint, Attributes]


def payload_from_dict(d: Mapping[str, Any]) -> CandidatePayload:
    kind = d.get("kind")
    if kind == "sequence":
        return Sequence(text=d["text"], alphabet=d.get("alphabet", DNA_ALPHABET))
    if kind == "fingerprint":
        return Fingerprint.from_hex(d["bits"], int(d["width"]))
    if kind == "attributes":
        return Attributes(values={k: float(v) for k, v in d["values"].items()})
    raise ValidationError(f"unknown payload kind: {kind!r}")


# ---------------------------------------------------------------------------
# Candidates and objectives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Origin:
    """Where a candidate came from."""

    iteration: int = 0
    generation: int = 0
    parent_ids: tuple[str, ...] = ()
    proposer_tag: str = "init"

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "generation": self.generation,
            "parent_ids": list(self.parent_ids),
            "proposer_tag": self.proposer_tag,
        }


@dataclass(frozen=True)
class Candidate:
    """One solution: a payload plus per-objective scores and provenance."""

    id: str
    payload: CandidatePayload
    origin: Origin = Origin()
    scores: Mapping[str, float] = field(default_factory=dict)
    aggregate: Optional[float] = None

    def with_scores(self, scores: Mapping[str, float], aggregate: Optional[float] = None) -> "Candidate":
        merged = dict(self.scores)
        merged.update(scores)
        return replace(self, scores=merged, aggregate=aggregate)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "payload": self.payload.to_dict(),
            "origin": self.origin.to_dict(),
            "scores": dict(self.scores),
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Candidate":
        origin = d.get("origin", {})
        return cls(
            id=d["id"],
            payload=payload_from_dict(d["payload"]),
            origin=Origin(
                iteration=int(origin.get("iteration", 0)),
                generation=int(origin.get("generation", 0)),
                parent_ids=tuple(origin.get("parent_ids", ())),
                proposer_tag=origin.get("proposer_tag", "init"),
            ),
            scores={k: float(v) for k, v in d.get("scores", {}).items()},
            aggregate=d.get("aggregate"),
        )


@dataclass(frozen=True)
class ScorerBinding:
    descriptor_id: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"descriptor_id": self.descriptor_id, "params": dict(self.params)}


@dataclass(frozen=True)
class Objective:
    """A named optimization target bound (eventually) to a scoring function."""

    id: str
    name: str
    description: str
    kind: ObjectiveKind
    direction: Direction
    weight: Optional[float] = None
    scorer_binding: Optional[ScorerBinding] = None

    def __post_init__(self) -> None:
        if self.kind is ObjectiveKind.FILTER:
            if self.direction is not Direction.NOT_APPLICABLE:
                raise ValidationError(
                    f"objective {self.id!r}: filter objectives take direction not_applicable"
                )
            if self.weight is not None:
                raise ValidationError(f"objective {self.id!r}: filter objectives cannot carry weights")
        else:
            if self.direction not in (Direction.MAXIMIZE, Direction.MINIMIZE):
                raise ValidationError(
                    f"objective {self.id!r}: non-filter objectives need maximize or minimize"
                )
        if self.weight is not None and self.weight < 0:
            raise ValidationError(f"objective {self.id!r}: weight must be >= 0")

    @property
    def is_filter(self) -> bool:
        return self.kind is ObjectiveKind.FILTER

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "kind": self.kind.value,
            "direction": self.direction.value,
            "weight": self.weight,
            "scorer_binding": self.scorer_binding.to_dict() if self.scorer_binding else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Objective":
        binding = d.get("scorer_binding")
        return cls(
            id=d["id"],
            name=d.get("name", d["id"]),
            description=d.get("description", ""),
            kind=ObjectiveKind(d["kind"]),
            direction=Direction(d["direction"]),
            weight=d.get("weight"),
            scorer_binding=ScorerBinding(binding["descriptor_id"], binding.get("params", {}))
            if binding
            else None,
        )


@dataclass(frozen=True)
class ObjectiveStats:
    mean: float
    std: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max}


@dataclass(frozen=True)
class Population:
    """An iteration's candidate list; stats derive from candidates exactly."""

    iteration: int
    candidates: tuple[Candidate, ...]

    def __len__(self) -> int:
        return len(self.candidates)

    def stats(self) -> dict[str, ObjectiveStats]:
        return population_stats(self)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "candidates": [c.to_dict() for c in self.candidates],
            "stats": {k: v.to_dict() for k, v in (self.stats() if self.candidates else {}).items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Population":
        return cls(
            iteration=int(d["iteration"]),
            candidates=tuple(Candidate.from_dict(c) for c in d["candidates"]),
        )


@dataclass(frozen=True)
class ScoreRecord:
    objective_id: str
    value: float
    is_filter: bool

    def __post_init__(self) -> None:
        if self.is_filter and self.value not in (0.0, 1.0):
            raise ValidationError(
                f"filter score for {self.objective_id!r} must be 0.0 or 1.0, got {self.value}"
            )


# ---------------------------------------------------------------------------
# Normalization and aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    """Linear map of a raw score range onto [0, 1]."""

    lo: float
    hi: float
    clamp: bool = True

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValidationError(f"normalizer needs hi > lo, got [{self.lo}, {self.hi}]")

    def normalize(self, value: float) -> float:
        t = (value - self.lo) / (self.hi - self.lo)
        if self.clamp:
            return min(1.0, max(0.0, t))
        if t < -_NORMALIZER_TOL or t > 1.0 + _NORMALIZER_TOL:
            raise AggregationError(
                f"normalizer contract violated: {value} maps to {t} outside [0, 1]"
            )
        return min(1.0, max(0.0, t))

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "clamp": self.clamp}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Normalizer":
        return cls(lo=float(d["lo"]), hi=float(d["hi"]), clamp=bool(d.get("clamp", True)))


@dataclass(frozen=True)
class AggregationSpec:
    """How per-objective scores fold into one scalar."""

    method: AggregationMethod = AggregationMethod.SIMPLE_PRODUCT
    normalizers: Mapping[str, Normalizer] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "normalizers": {k: v.to_dict() for k, v in self.normalizers.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AggregationSpec":
        return cls(
            method=AggregationMethod(d.get("method", "simple_product")),
            normalizers={k: Normalizer.from_dict(v) for k, v in d.get("normalizers", {}).items()},
        )


def normalized_score(value: float, objective: Objective, normalizer: Normalizer) -> float:
    """Raw score -> [0, 1], higher-is-better regardless of direction."""
    s = normalizer.normalize(value)
    if objective.direction is Direction.MINIMIZE:
        s = 1.0 - s
    return s


def aggregate(
    scores: Mapping[str, float],
    objectives: Iterable[Objective],
    method: AggregationMethod = AggregationMethod.SIMPLE_PRODUCT,
    normalizers: Optional[Mapping[str, Normalizer]] = None,
) -> float:
    """Fold per-objective scores into one scalar in [0, 1].

    simple_product multiplies filter bits with normalized scores raised to
    their weights; weighted_sum multiplies filter bits with the weighted
    mean of normalized scores. Any failing filter annihilates the result.
    """
    normalizers = normalizers or {}
    filter_product = 1.0
    weighted: list[tuple[float, float]] = []  # (weight, normalized)
    for obj in objectives:
        if obj.id not in scores:
            raise AggregationError(f"unscored objective: {obj.id!r}")
        value = scores[obj.id]
        if obj.is_filter:
            ScoreRecord(obj.id, value, is_filter=True)  # validates 0/1
            filter_product *= value
            continue
        if obj.id not in normalizers:
            raise AggregationError(f"no normalizer declared for objective {obj.id!r}")
        s = normalized_score(value, obj, normalizers[obj.id])
        weighted.append((1.0 if obj.weight is None else obj.weight, s))

    if method is AggregationMethod.SIMPLE_PRODUCT:
        result = filter_product
        for w, s in weighted:
            result *= s**w
        return result
    if method is AggregationMethod.WEIGHTED_SUM:
        total_w = sum(w for w, _ in weighted)
        if total_w == 0.0:
            return filter_product
        return filter_product * sum(w * s for w, s in weighted) / total_w
    raise AggregationError(f"unknown aggregation method: {method}")


def population_stats(pop: Population) -> dict[str, ObjectiveStats]:
    """Exact per-objective moments over a population (std divisor N)."""
    if not pop.candidates:
        raise ValidationError("cannot compute stats of an empty population")
    keys = set(pop.candidates[0].scores)
    for c in pop.candidates:
        if set(c.scores) != keys:
            raise ValidationError(
                f"candidate {c.id!r} score keys differ from the rest of the population"
            )
    out: dict[str, ObjectiveStats] = {}
    for key in sorted(keys):
        vals = [float(c.scores[key]) for c in pop.candidates]
        n = len(vals)
        mean = sum(vals) / n
        var = sum((v - mean) ** 2 for v in vals) / n
        out[key] = ObjectiveStats(mean=mean, std=math.sqrt(var), min=min(vals), max=max(vals))
    return out
