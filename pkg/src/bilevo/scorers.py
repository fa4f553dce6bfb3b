"""Built-in scoring functions, the descriptor registry the implementer
matches against, and the evaluator that scores populations against bound
objectives.

Every scorer is a pure, deterministic function of (payload, params,
read-only context files); context files are loaded once at bind time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from itertools import groupby
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional

import numpy as np

from .core import (
    AggregationSpec,
    Attributes,
    Candidate,
    CandidatePayload,
    Direction,
    EngineError,
    Fingerprint,
    Normalizer,
    Objective,
    ObjectiveKind,
    Population,
    Sequence,
    aggregate,
)
from . import pwm

logger = logging.getLogger(__name__)


class ScorerError(EngineError):
    """Raised when a scoring function cannot evaluate its input."""


# ---------------------------------------------------------------------------
# Sequence statistics
# ---------------------------------------------------------------------------


def gc_fraction(text: str) -> float:
    if not text:
        raise ScorerError("empty sequence")
    return (text.count("G") + text.count("C")) / len(text)


def longest_run(text: str) -> int:
    """Length of the longest single-character run."""
    if not text:
        raise ScorerError("empty sequence")
    return max(sum(1 for _ in grp) for _, grp in groupby(text))


def gc_homopolymer_penalty(
    text: str,
    target_gc: float = 0.45,
    run_cap: int = 5,
    w_gc: float = 1.0,
    w_run: float = 0.2,
) -> float:
    """w_gc * |GC - target| + w_run * max(0, longest_run - run_cap). Lower is better."""
    gc_dev = abs(gc_fraction(text) - target_gc)
    excess = max(0, longest_run(text) - run_cap)
    return w_gc * gc_dev + w_run * excess


def stability_hinge(
    text: str,
    margin: float = 0.15,
    target_gc: float = 0.45,
    run_cap: int = 5,
    w_gc: float = 1.0,
    w_run: float = 0.2,
) -> float:
    """max(0, P - margin) where P is the GC/homopolymer penalty."""
    return max(0.0, gc_homopolymer_penalty(text, target_gc, run_cap, w_gc, w_run) - margin)


def composite_specificity(
    h: float,
    k: float,
    n: float,
    tau: float = 0.10,
    alpha: float = 1.3,
    beta: float = 1.3,
) -> float:
    """On-target signal minus hinged off-target penalties: h - a*ReLU(k-tau) - b*ReLU(n-tau)."""
    return h - alpha * max(0.0, k - tau) - beta * max(0.0, n - tau)


def offtarget_ratio(num: float, denom: float, epsilon: float = 0.25) -> float:
    """num / max(epsilon, denom); epsilon keeps small denominators from exploding the ratio."""
    if epsilon <= 0:
        raise ScorerError("epsilon must be > 0")
    return num / max(epsilon, denom)


def mw_sigmoid_penalty(mw: float, midpoint: float = 500.0, scale: float = 50.0) -> float:
    """1 / (1 + exp((mw - midpoint) / scale)); 0.5 at the midpoint, -> 1 for small mw."""
    if scale <= 0:
        raise ScorerError("scale must be > 0")
    return 1.0 / (1.0 + math.exp((mw - midpoint) / scale))


def hamming(a: str, b: str) -> int:
    if len(a) != len(b):
        raise ScorerError(f"hamming distance needs equal lengths, got {len(a)} and {len(b)}")
    return sum(1 for x, y in zip(a, b) if x != y)


def avg_pairwise_hamming(texts: list[str]) -> float:
    """Mean Hamming distance over all unordered pairs (raw count, not normalized)."""
    if len(texts) < 2:
        raise ScorerError("average pairwise Hamming distance needs at least 2 sequences")
    total = 0
    npairs = 0
    for i in range(len(texts)):
        for j in range(i + 1, len(texts)):
            total += hamming(texts[i], texts[j])
            npairs += 1
    return total / npairs


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a & b| / |a | b|; two all-zero fingerprints count as identical (1.0)."""
    if a.width != b.width:
        raise ScorerError(f"fingerprint width mismatch: {a.width} != {b.width}")
    union = bin(a.bits | b.bits).count("1")
    if union == 0:
        return 1.0
    return bin(a.bits & b.bits).count("1") / union


def threshold_filter(value: float, threshold: float, direction: str) -> float:
    """1.0 iff value passes the inclusive comparison, else 0.0."""
    if direction == "at_least":
        return 1.0 if value >= threshold else 0.0
    if direction == "at_most":
        return 1.0 if value <= threshold else 0.0
    raise ScorerError(f"unknown filter direction {direction!r}")


# ---------------------------------------------------------------------------
# k-mer features
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KmerVector:
    k: int
    vec: np.ndarray


def kmer_indices(text: str, k: int) -> np.ndarray:
    codes = pwm.encode(text)
    if len(codes) < k:
        return np.zeros(0, dtype=np.int64)
    windows = np.lib.stride_tricks.sliding_window_view(codes, k)
    powers = 4 ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return windows @ powers


def kmer_unit_vector(text: str, k: int) -> KmerVector:
    """Overlapping k-mer counts, L1- then L2-normalized; zero vector if len < k."""
    counts = np.bincount(kmer_indices(text, k), minlength=4**k).astype(float)
    total = counts.sum()
    if total == 0:
        return KmerVector(k, counts)
    freqs = counts / total
    return KmerVector(k, freqs / np.linalg.norm(freqs))


def kmer_novelty(text: str, reference: list[KmerVector], k: int = 6) -> float:
    """1 - max cosine similarity against the reference archive; 1.0 when empty."""
    if len(text) < k:
        raise ScorerError("sequence shorter than k")
    if not reference:
        return 1.0
    v = kmer_unit_vector(text, k)
    best = 0.0
    for r in reference:
        if r.k != k:
            raise ScorerError(f"reference vector built with k={r.k}, expected {k}")
        best = max(best, float(v.vec @ r.vec))
    return 1.0 - best


@dataclass(frozen=True)
class KmerWeightTable:
    k: int
    bias: float
    weights: Mapping[str, float]


def parse_weight_table(text: str) -> KmerWeightTable:
    """Header `k=<int> bias=<real>`, then `<kmer> <weight>` lines."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ScorerError("empty weight table")
    header = dict(tok.split("=", 1) for tok in lines[0].split())
    if "k" not in header or "bias" not in header:
        raise ScorerError("weight table header must declare k= and bias=")
    k = int(header["k"])
    weights: dict[str, float] = {}
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ScorerError(f"bad weight line: {ln!r}")
        kmer, w = parts
        if len(kmer) != k or set(kmer) - set(pwm.BASES):
            raise ScorerError(f"weight table k-mer {kmer!r} is not a {k}-mer over ACGT")
        weights[kmer] = float(w)
    return KmerWeightTable(k=k, bias=float(header["bias"]), weights=weights)


def load_weight_table(path: str | Path) -> KmerWeightTable:
    return parse_weight_table(Path(path).read_text())


def kmer_surrogate_score(text: str, table: KmerWeightTable) -> float:
    """bias + sum of table weights over all overlapping k-mers (missing k-mers are 0)."""
    if len(text) < table.k:
        raise ScorerError("sequence shorter than k")
    total = table.bias
    for i in range(len(text) - table.k + 1):
        total += table.weights.get(text[i : i + table.k], 0.0)
    return total


def motif_enrichment_score(text: str, motifs: list[tuple[pwm.LogOddsMatrix, float]]) -> float:
    """Sum over all hits of (hit score - motif threshold), both strands, all motifs."""
    if not motifs:
        raise ScorerError("motif set must be non-empty")
    total = 0.0
    for lom, threshold in motifs:
        for hit in pwm.scan(text, lom, threshold):
            total += hit.score - threshold
    return total


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSpec:
    type: str
    default: Any = None
    constraint: str = ""


@dataclass(frozen=True)
class ScoringFunctionDescriptor:
    descriptor_id: str
    kind: ObjectiveKind
    param_schema: Mapping[str, ParamSpec]
    range: tuple[float, float]
    direction_hint: str
    description: str

    def to_dict(self) -> dict:
        return {
            "descriptor_id": self.descriptor_id,
            "kind": self.kind.value,
            "param_schema": {
                k: {"type": p.type, "default": p.default, "constraint": p.constraint}
                for k, p in self.param_schema.items()
            },
            "range": [_json_inf(self.range[0]), _json_inf(self.range[1])],
            "direction_hint": self.direction_hint,
            "description": self.description,
        }


def _json_inf(x: float):
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return x


class BoundScorer:
    """A scoring function with validated parameters and loaded context files."""

    def __init__(
        self,
        descriptor: ScoringFunctionDescriptor,
        params: Mapping[str, Any],
        candidate_fn: Optional[Callable[[CandidatePayload], float]] = None,
        population_fn: Optional[Callable[[list[CandidatePayload]], float]] = None,
        filter_fn: Optional[Callable[[Candidate], float]] = None,
    ):
        self.descriptor = descriptor
        self.params = dict(params)
        self._candidate_fn = candidate_fn
        self._population_fn = population_fn
        self._filter_fn = filter_fn

    @property
    def kind(self) -> ObjectiveKind:
        return self.descriptor.kind

    def score_candidate(self, payload: CandidatePayload) -> float:
        if self._candidate_fn is None:
            raise ScorerError(f"{self.descriptor.descriptor_id} is not candidate-wise")
        return float(self._candidate_fn(payload))

    def score_population(self, payloads: list[CandidatePayload]) -> float:
        if self._population_fn is None:
            raise ScorerError(f"{self.descriptor.descriptor_id} is not population-wise")
        return float(self._population_fn(payloads))

    def score_filter(self, candidate: Candidate) -> float:
        if self._filter_fn is None:
            raise ScorerError(f"{self.descriptor.descriptor_id} is not a filter")
        return float(self._filter_fn(candidate))


Factory = Callable[[dict, Optional[Path]], BoundScorer]


class ScorerRegistry:
    def __init__(self) -> None:
        self._entries: dict[str, tuple[ScoringFunctionDescriptor, Factory]] = {}

    def register(self, descriptor: ScoringFunctionDescriptor, factory: Factory) -> None:
        if descriptor.descriptor_id in self._entries:
            raise ScorerError(f"duplicate descriptor id {descriptor.descriptor_id!r}")
        self._entries[descriptor.descriptor_id] = (descriptor, factory)

    def descriptor(self, descriptor_id: str) -> ScoringFunctionDescriptor:
        if descriptor_id not in self._entries:
            raise ScorerError(f"unknown scoring function {descriptor_id!r}")
        return self._entries[descriptor_id][0]

    def descriptors(self) -> list[ScoringFunctionDescriptor]:
        return [d for d, _ in self._entries.values()]

    def __contains__(self, descriptor_id: str) -> bool:
        return descriptor_id in self._entries

    def bind(
        self, descriptor_id: str, params: Mapping[str, Any] | None = None, base_dir: Path | None = None
    ) -> BoundScorer:
        descriptor, factory = self._entries.get(descriptor_id, (None, None))
        if descriptor is None:
            raise ScorerError(f"unknown scoring function {descriptor_id!r}")
        merged = {k: spec.default for k, spec in descriptor.param_schema.items()}
        for key, value in (params or {}).items():
            if key not in descriptor.param_schema:
                raise ScorerError(f"{descriptor_id}: unknown parameter {key!r}")
            merged[key] = value
        return factory(merged, base_dir)


def _as_sequence(payload: CandidatePayload) -> str:
    if not isinstance(payload, Sequence):
        raise ScorerError(f"expected a sequence payload, got {type(payload).__name__}")
    return payload.text


def _as_attributes(payload: CandidatePayload) -> Attributes:
    if not isinstance(payload, Attributes):
        raise ScorerError(f"expected an attributes payload, got {type(payload).__name__}")
    return payload


def _as_fingerprint(payload: CandidatePayload) -> Fingerprint:
    if not isinstance(payload, Fingerprint):
        raise ScorerError(f"expected a fingerprint payload, got {type(payload).__name__}")
    return payload


def _resolve(path_str: str, base_dir: Path | None) -> Path:
    p = Path(path_str)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    if not p.exists():
        raise ScorerError(f"context file not found: {p}")
    return p


def _surrogate_fn(path_str: str, base_dir: Path | None) -> Callable[[str], float]:
    table = load_weight_table(_resolve(path_str, base_dir))
    return lambda text: kmer_surrogate_score(text, table)


def build_default_registry() -> ScorerRegistry:
    reg = ScorerRegistry()

    def _penalty_params() -> dict[str, ParamSpec]:
        return {
            "target_gc": ParamSpec("float", 0.45, "0 <= target_gc <= 1"),
            "run_cap": ParamSpec("int", 5, "run_cap >= 1"),
            "w_gc": ParamSpec("float", 1.0, "w_gc >= 0"),
            "w_run": ParamSpec("float", 0.2, "w_run >= 0"),
        }

    reg.register(
        ScoringFunctionDescriptor(
            "gc_homopolymer_penalty",
            ObjectiveKind.CANDIDATE_WISE,
            _penalty_params(),
            (0.0, math.inf),
            "minimize",
            "DNA stability penalty: deviation of GC content from a target plus "
            "excess homopolymer run length beyond a cap.",
        ),
        lambda p, d: BoundScorer(
            reg.descriptor("gc_homopolymer_penalty"),
            p,
            candidate_fn=lambda payload: gc_homopolymer_penalty(
                _as_sequence(payload), p["target_gc"], p["run_cap"], p["w_gc"], p["w_run"]
            ),
        ),
    )

    reg.register(
        ScoringFunctionDescriptor(
            "stability_hinge",
            ObjectiveKind.CANDIDATE_WISE,
            {**_penalty_params(), "margin": ParamSpec("float", 0.15, "margin >= 0")},
            (0.0, math.inf),
            "minimize",
            "Hinge on the DNA stability penalty: max(0, penalty - margin), "
            "targeting only unstable outlier sequences with GC imbalance or long homopolymer runs.",
        ),
        lambda p, d: BoundScorer(
            reg.descriptor("stability_hinge"),
            p,
            candidate_fn=lambda payload: stability_hinge(
                _as_sequence(payload), p["margin"], p["target_gc"], p["run_cap"], p["w_gc"], p["w_run"]
            ),
        ),
    )

    def _specificity_factory(p: dict, base_dir: Path | None) -> BoundScorer:
        if p.get("h_table"):
            h_fn = _surrogate_fn(p["h_table"], base_dir)
            k_fn = _surrogate_fn(p["k_table"], base_dir)
            n_fn = _surrogate_fn(p["n_table"], base_dir)

            def fn(payload: CandidatePayload) -> float:
                text = _as_sequence(payload)
                return composite_specificity(
                    h_fn(text), k_fn(text), n_fn(text), p["tau"], p["alpha"], p["beta"]
                )

        else:

            def fn(payload: CandidatePayload) -> float:
                attrs = _as_attributes(payload)
                return composite_specificity(
                    attrs.get(p["h_attr"]),
                    attrs.get(p["k_attr"]),
                    attrs.get(p["n_attr"]),
                    p["tau"],
                    p["alpha"],
                    p["beta"],
                )

        return BoundScorer(reg.descriptor("composite_specificity"), p, candidate_fn=fn)

    reg.register(
        ScoringFunctionDescriptor(
            "composite_specificity",
            ObjectiveKind.CANDIDATE_WISE,
            {
                "tau": ParamSpec("float", 0.10, "noise threshold"),
                "alpha": ParamSpec("float", 1.3, "first off-target penalty weight"),
                "beta": ParamSpec("float", 1.3, "second off-target penalty weight"),
                "h_attr": ParamSpec("str", "h", "attribute key for on-target signal"),
                "k_attr": ParamSpec("str", "k", "attribute key for first off-target signal"),
                "n_attr": ParamSpec("str", "n", "attribute key for second off-target signal"),
                "h_table": ParamSpec("path", None, "k-mer weight table for on-target signal"),
                "k_table": ParamSpec("path", None, "k-mer weight table for first off-target"),
                "n_table": ParamSpec("path", None, "k-mer weight table for second off-target"),
            },
            (-math.inf, math.inf),
            "maximize",
            "Composite on-target specificity: on-target activity minus hinged "
            "penalties for off-target activity above a noise threshold.",
        ),
        _specificity_factory,
    )

    def _ratio_factory(p: dict, base_dir: Path | None) -> BoundScorer:
        if p.get("num_table"):
            num_fn = _surrogate_fn(p["num_table"], base_dir)
            den_fn = _surrogate_fn(p["denom_table"], base_dir)

            def fn(payload: CandidatePayload) -> float:
                text = _as_sequence(payload)
                return offtarget_ratio(num_fn(text), den_fn(text), p["epsilon"])

        else:

            def fn(payload: CandidatePayload) -> float:
                attrs = _as_attributes(payload)
                return offtarget_ratio(attrs.get(p["num_attr"]), attrs.get(p["denom_attr"]), p["epsilon"])

        return BoundScorer(reg.descriptor("offtarget_ratio"), p, candidate_fn=fn)

    reg.register(
        ScoringFunctionDescriptor(
            "offtarget_ratio",
            ObjectiveKind.CANDIDATE_WISE,
            {
                "epsilon": ParamSpec("float", 0.25, "denominator floor, > 0"),
                "num_attr": ParamSpec("str", "num", "attribute key for the numerator"),
                "denom_attr": ParamSpec("str", "denom", "attribute key for the denominator"),
                "num_table": ParamSpec("path", None, "k-mer weight table for the numerator"),
                "denom_table": ParamSpec("path", None, "k-mer weight table for the denominator"),
            },
            (-math.inf, math.inf),
            "minimize",
            "Off-target leakage ratio: off-target activity over on-target activity "
            "with an epsilon-stabilized denominator.",
        ),
        _ratio_factory,
    )

    def _motif_factory(p: dict, base_dir: Path | None) -> BoundScorer:
        text = _resolve(p["motif_file"], base_dir).read_text()
        counts = pwm.parse_jaspar(text)
        if not counts:
            raise ScorerError(f"no motifs found in {p['motif_file']}")
        per_cell = p["pseudocount"] / 4.0
        motifs = []
        for m in counts:
            lom = pwm.log_odds(m, pwm.UNIFORM_BACKGROUND, per_cell)
            motifs.append((lom, pwm.threshold_for_pvalue(lom, p["pvalue"], p["granularity"])))
        return BoundScorer(
            reg.descriptor("motif_enrichment"),
            p,
            candidate_fn=lambda payload: motif_enrichment_score(_as_sequence(payload), motifs),
        )

    reg.register(
        ScoringFunctionDescriptor(
            "motif_enrichment",
            ObjectiveKind.CANDIDATE_WISE,
            {
                "motif_file": ParamSpec("path", None, "JASPAR count-matrix file"),
                "pvalue": ParamSpec("float", 1e-4, "hit threshold tail probability"),
                "pseudocount": ParamSpec("float", 0.8, "total pseudocount, split uniformly"),
                "granularity": ParamSpec("float", 1e-3, "score discretization bin width"),
            },
            (0.0, math.inf),
            "maximize",
            "Motif enrichment: sum over both-strand PWM hits of the margin by which "
            "the hit log-odds score exceeds the motif's p-value threshold.",
        ),
        _motif_factory,
    )

    def _novelty_factory(p: dict, base_dir: Path | None) -> BoundScorer:
        k = p["k"]
        refs: list[KmerVector] = []
        if p.get("reference_file"):
            for line in _resolve(p["reference_file"], base_dir).read_text().splitlines():
                line = line.strip()
                if line and not line.startswith("#") and not line.startswith(">"):
                    refs.append(kmer_unit_vector(line, k))
        return BoundScorer(
            reg.descriptor("kmer_novelty"),
            p,
            candidate_fn=lambda payload: kmer_novelty(_as_sequence(payload), refs, k),
        )

    reg.register(
        ScoringFunctionDescriptor(
            "kmer_novelty",
            ObjectiveKind.CANDIDATE_WISE,
            {
                "k": ParamSpec("int", 6, "k-mer size"),
                "reference_file": ParamSpec("path", None, "one reference sequence per line"),
            },
            (0.0, 1.0),
            "maximize",
            "Sequence novelty: one minus the maximum cosine similarity between the "
            "candidate's normalized k-mer vector and a reference archive.",
        ),
        _novelty_factory,
    )

    reg.register(
        ScoringFunctionDescriptor(
            "avg_pairwise_hamming",
            ObjectiveKind.POPULATION_WISE,
            {},
            (0.0, math.inf),
            "maximize",
            "Population diversity: average pairwise Hamming distance across all sequences.",
        ),
        lambda p, d: BoundScorer(
            reg.descriptor("avg_pairwise_hamming"),
            p,
            population_fn=lambda payloads: avg_pairwise_hamming([_as_sequence(x) for x in payloads]),
        ),
    )

    reg.register(
        ScoringFunctionDescriptor(
            "mw_sigmoid_penalty",
            ObjectiveKind.CANDIDATE_WISE,
            {
                "attr_key": ParamSpec("str", "mw", "attribute holding molecular weight"),
                "midpoint": ParamSpec("float", 500.0, "sigmoid midpoint"),
                "scale": ParamSpec("float", 50.0, "sigmoid scale, > 0"),
            },
            (0.0, 1.0),
            "maximize",
            "Molecular weight sigmoid penalty: near 1 for small values, 0.5 at the midpoint.",
        ),
        lambda p, d: BoundScorer(
            reg.descriptor("mw_sigmoid_penalty"),
            p,
            candidate_fn=lambda payload: mw_sigmoid_penalty(
                _as_attributes(payload).get(p["attr_key"]), p["midpoint"], p["scale"]
            ),
        ),
    )

    def _tanimoto_factory(p: dict, base_dir: Path | None) -> BoundScorer:
        width = p["width"]
        pool: list[Fingerprint] = []
        if p.get("reference"):
            pool.append(Fingerprint.from_hex(p["reference"], width))
        if p.get("reference_file"):
            for line in _resolve(p["reference_file"], base_dir).read_text().splitlines():
                line = line.strip()
                if line and not line.startswith("#"):
                    pool.append(Fingerprint.from_hex(line, width))
        if not pool:
            raise ScorerError("tanimoto_similarity needs reference or reference_file")
        return BoundScorer(
            reg.descriptor("tanimoto_similarity"),
            p,
            candidate_fn=lambda payload: max(tanimoto(_as_fingerprint(payload), r) for r in pool),
        )

    reg.register(
        ScoringFunctionDescriptor(
            "tanimoto_similarity",
            ObjectiveKind.CANDIDATE_WISE,
            {
                "width": ParamSpec("int", 2048, "fingerprint bit width"),
                "reference": ParamSpec("str", None, "single reference fingerprint, hex"),
                "reference_file": ParamSpec("path", None, "reference pool, one hex per line"),
            },
            (0.0, 1.0),
            "maximize",
            "Tanimoto similarity of a bit fingerprint to the closest reference fingerprint.",
        ),
        _tanimoto_factory,
    )

    def _filter_factory(p: dict, base_dir: Path | None) -> BoundScorer:
        of_objective, attr_key = p.get("of_objective"), p.get("attr_key")
        if bool(of_objective) == bool(attr_key):
            raise ScorerError("threshold_filter needs exactly one of of_objective / attr_key")

        def fn(candidate: Candidate) -> float:
            if of_objective:
                if of_objective not in candidate.scores:
                    raise ScorerError(f"filter source objective {of_objective!r} not scored yet")
                value = candidate.scores[of_objective]
            else:
                value = _as_attributes(candidate.payload).get(attr_key)
            return threshold_filter(value, p["threshold"], p["direction"])

        return BoundScorer(reg.descriptor("threshold_filter"), p, filter_fn=fn)

    reg.register(
        ScoringFunctionDescriptor(
            "threshold_filter",
            ObjectiveKind.FILTER,
            {
                "threshold": ParamSpec("float", 0.0, "comparison value"),
                "direction": ParamSpec("str", "at_least", "at_least | at_most"),
                "of_objective": ParamSpec("str", None, "objective id whose score is tested"),
                "attr_key": ParamSpec("str", None, "attribute key whose value is tested"),
            },
            (0.0, 1.0),
            "filter",
            "Binary constraint: 1.0 when the referenced value passes the inclusive "
            "threshold comparison, 0.0 otherwise.",
        ),
        _filter_factory,
    )

    reg.register(
        ScoringFunctionDescriptor(
            "kmer_surrogate_score",
            ObjectiveKind.CANDIDATE_WISE,
            {"table_file": ParamSpec("path", None, "k-mer weight table file")},
            (-math.inf, math.inf),
            "maximize",
            "Linear k-mer surrogate model: bias plus summed weights of all "
            "overlapping k-mers, standing in for an expression predictor.",
        ),
        lambda p, d: BoundScorer(
            reg.descriptor("kmer_surrogate_score"),
            p,
            candidate_fn=(lambda fn: lambda payload: fn(_as_sequence(payload)))(
                _surrogate_fn(p["table_file"], d)
            ),
        ),
    )

    return reg


_DEFAULT_REGISTRY: ScorerRegistry | None = None


def default_registry() -> ScorerRegistry:
    global _DEFAULT_REGISTRY
    if _DEFAULT_REGISTRY is None:
        _DEFAULT_REGISTRY = build_default_registry()
    return _DEFAULT_REGISTRY


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalCounter:
    """Scorer-invocation accounting; candidate_wise is what budgets cap."""

    candidate_wise: int = 0
    population_wise: int = 0


class Evaluator:
    """Scores populations against bound objectives and computes aggregates."""

    def __init__(
        self,
        objectives: Iterable[Objective],
        aggregation: AggregationSpec,
        base_dir: Path | None = None,
        registry: ScorerRegistry | None = None,
    ):
        self.registry = registry or default_registry()
        self.objectives = list(objectives)
        self.aggregation = aggregation
        self.scorers: dict[str, BoundScorer] = {}
        for obj in self.objectives:
            if obj.scorer_binding is None:
                raise ScorerError(f"objective {obj.id!r} has no scorer binding")
            self.scorers[obj.id] = self.registry.bind(
                obj.scorer_binding.descriptor_id, obj.scorer_binding.params, base_dir
            )
            if self.scorers[obj.id].kind is not obj.kind:
                raise ScorerError(
                    f"objective {obj.id!r} ({obj.kind.value}) bound to "
                    f"{obj.scorer_binding.descriptor_id!r} ({self.scorers[obj.id].kind.value})"
                )
        self.normalizers = self._resolve_normalizers()

    def _resolve_normalizers(self) -> dict[str, Normalizer]:
        out: dict[str, Normalizer] = {}
        for obj in self.objectives:
            if obj.is_filter:
                continue
            if obj.id in self.aggregation.normalizers:
                out[obj.id] = self.aggregation.normalizers[obj.id]
                continue
            lo, hi = self.scorers[obj.id].descriptor.range
            if math.isfinite(lo) and math.isfinite(hi):
                out[obj.id] = Normalizer(lo=lo, hi=hi, clamp=True)
            else:
                raise ScorerError(
                    f"objective {obj.id!r} has an unbounded scorer range and no declared normalizer"
                )
        return out

    def aggregate_scores(self, scores: Mapping[str, float]) -> float:
        return aggregate(scores, self.objectives, self.aggregation.method, self.normalizers)

    def evaluate_population(
        self,
        pop: Population,
        counter: EvalCounter,
        budget: int | None = None,
    ) -> Population:
        """Score every missing objective value, then refresh aggregates.

        Candidate-wise values already present are kept (scorers are
        deterministic). While a budget is given, candidates still needing
        candidate-wise scores are admitted only while the counter is under
        budget; the rest of the batch is dropped. Candidates whose scorer
        raises are dropped and logged, not fatal.
        """
        cw = [o for o in self.objectives if o.kind is ObjectiveKind.CANDIDATE_WISE]
        pw = [o for o in self.objectives if o.kind is ObjectiveKind.POPULATION_WISE]
        filters = [o for o in self.objectives if o.is_filter]

        admitted: list[Candidate] = []
        for cand in pop.candidates:
            missing = [o for o in cw if o.id not in cand.scores]
            if missing and budget is not None and counter.candidate_wise >= budget:
                logger.info("budget exhausted; dropping unevaluated candidate %s", cand.id)
                continue
            try:
                new_scores = {}
                for obj in missing:
                    new_scores[obj.id] = self.scorers[obj.id].score_candidate(cand.payload)
                    counter.candidate_wise += 1
            except ScorerError as exc:
                logger.warning("discarding candidate %s: %s", cand.id, exc)
                continue
            admitted.append(cand.with_scores(new_scores) if new_scores else cand)

        if pw and admitted:
            payloads = [c.payload for c in admitted]
            pw_scores = {}
            for obj in pw:
                pw_scores[obj.id] = self.scorers[obj.id].score_population(payloads)
                counter.population_wise += 1
            admitted = [c.with_scores(pw_scores) for c in admitted]

        final: list[Candidate] = []
        for cand in admitted:
            try:
                if filters:
                    cand = cand.with_scores(
                        {o.id: self.scorers[o.id].score_filter(cand) for o in filters}
                    )
                final.append(replace(cand, aggregate=self.aggregate_scores(cand.scores)))
            except (ScorerError, EngineError) as exc:
                logger.warning("discarding candidate %s at aggregation: %s", cand.id, exc)
        return Population(iteration=pop.iteration, candidates=tuple(final))
