from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilevo import pwm
from bilevo.core import (
    AggregationSpec,
    Attributes,
    Candidate,
    Direction,
    Fingerprint,
    Normalizer,
    ObjectiveKind,
    Population,
    ScorerBinding,
    Sequence,
)
from bilevo.scorers import (
    EvalCounter,
    Evaluator,
    KmerWeightTable,
    ScorerError,
    avg_pairwise_hamming,
    composite_specificity,
    default_registry,
    gc_homopolymer_penalty,
    kmer_novelty,
    kmer_surrogate_score,
    kmer_unit_vector,
    motif_enrichment_score,
    mw_sigmoid_penalty,
    offtarget_ratio,
    parse_weight_table,
    stability_hinge,
    tanimoto,
    threshold_filter,
)

from helpers import make_objective, random_sequences

dna = st.text(alphabet="ACGT", min_size=1, max_size=120)
REVCOMP = str.maketrans("ACGT", "TGCA")


class TestGcHomopolymerPenalty:
    def test_on_target_sequence_scores_zero(self):
        # 200-mer with exactly 90 G/C and no run over 5
        seq = "GC" * 45 + "AT" * 55
        assert len(seq) == 200
        assert gc_homopolymer_penalty(seq) == pytest.approx(0.0)

    def test_acgt_repeat(self):
        # hand evaluation: gc_dev = |0.5 - 0.45|, longest run 1
        assert gc_homopolymer_penalty("ACGT" * 50) == pytest.approx(0.05)

    def test_all_g(self):
        # hand evaluation: 0.55 + 0.2 * 195
        assert gc_homopolymer_penalty("G" * 200) == pytest.approx(39.55)

    def test_empty_sequence_errors(self):
        with pytest.raises(ScorerError):
            gc_homopolymer_penalty("")

    @given(dna)
    def test_invariant_under_reverse_complement(self, seq):
        rc = seq.translate(REVCOMP)[::-1]
        assert gc_homopolymer_penalty(seq) == pytest.approx(gc_homopolymer_penalty(rc))


class TestStabilityHinge:
    def test_below_margin_is_zero(self):
        assert stability_hinge("GC" * 45 + "AT" * 55) == 0.0
        assert stability_hinge("ACGT" * 50) == 0.0  # P = 0.05 <= 0.15

    def test_hinge_active(self):
        # hand evaluation: gc fraction 0.70 -> P = 0.25 -> hinge 0.10
        seq = "GC" * 70 + "AT" * 30
        assert gc_homopolymer_penalty(seq) == pytest.approx(0.25)
        assert stability_hinge(seq) == pytest.approx(0.10)

    def test_all_a(self):
        # hand evaluation: P = 0.45 + 39.0, hinge takes off the 0.15 margin
        assert stability_hinge("A" * 200) == pytest.approx(39.30)

    def test_boundary_exactly_at_margin(self):
        # P == margin -> 0 (acceptance boundary)
        seq = "GC" * 60 + "AT" * 40  # gc 0.60, dev 0.15
        assert gc_homopolymer_penalty(seq) == pytest.approx(0.15)
        assert stability_hinge(seq) == 0.0


class TestCompositeSpecificity:
    def test_hinges_inactive_below_tau(self):
        assert composite_specificity(1.7, 0.10, 0.03) == pytest.approx(1.7)

    def test_hand_value(self):
        # hand evaluation: 2.0 - 1.3 * 0.20 with the default hinge constants
        assert composite_specificity(2.0, 0.05, 0.30) == pytest.approx(1.74)

    def test_both_hinges_active(self):
        assert composite_specificity(0.0, 1.10, 1.10) == pytest.approx(-2.6)

    @given(
        st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.001, 2.0)
    )
    def test_monotone_in_h_and_antitone_in_k(self, h, k, n, delta):
        base = composite_specificity(h, k, n)
        assert composite_specificity(h + delta, k, n) >= base
        assert composite_specificity(h, k + delta, n) <= base
        assert composite_specificity(h, k, n + delta) <= base


class TestOfftargetRatio:
    def test_zero_numerator(self):
        assert offtarget_ratio(0.0, 5.0) == 0.0

    def test_plain_ratio(self):
        assert offtarget_ratio(0.5, 1.0) == pytest.approx(0.5)

    def test_epsilon_clamp_active(self):
        # clamp active: 0.5 / max(0.25, 0.1)
        assert offtarget_ratio(0.5, 0.1) == pytest.approx(2.0)

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ScorerError):
            offtarget_ratio(1.0, 1.0, epsilon=0.0)


class TestMwSigmoid:
    def test_midpoint(self):
        assert mw_sigmoid_penalty(500.0) == pytest.approx(0.5, abs=1e-12)

    def test_hand_value(self):
        assert mw_sigmoid_penalty(450.0) == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-9)
        assert mw_sigmoid_penalty(450.0) == pytest.approx(0.731059, abs=1e-6)

    def test_small_mw_asymptote(self):
        assert mw_sigmoid_penalty(0.0) > 0.9999


class TestHamming:
    def test_identical(self):
        assert avg_pairwise_hamming(["ACGT", "ACGT"]) == 0.0

    def test_opposite_pair(self):
        assert avg_pairwise_hamming(["AAAA", "TTTT"]) == 4.0

    def test_three_sequences(self):
        # hand count: mean{4, 2, 2}
        assert avg_pairwise_hamming(["AAAA", "TTTT", "AATT"]) == pytest.approx(8 / 3)

    def test_length_mismatch(self):
        with pytest.raises(ScorerError):
            avg_pairwise_hamming(["AAA", "AAAA"])

    def test_needs_two(self):
        with pytest.raises(ScorerError):
            avg_pairwise_hamming(["AAAA"])


class TestTanimoto:
    def test_equal_nonzero(self):
        fp = Fingerprint(0b1011, 8)
        assert tanimoto(fp, fp) == 1.0

    def test_disjoint(self):
        assert tanimoto(Fingerprint(0b0011, 8), Fingerprint(0b1100, 8)) == 0.0

    def test_partial_overlap(self):
        # hand count: bits {1,2,3} vs {2,3,4} -> 2/4
        a = Fingerprint(0b0001110, 8)
        b = Fingerprint(0b0011100, 8)
        assert tanimoto(a, b) == pytest.approx(0.5)

    def test_both_zero_defined_as_one(self):
        assert tanimoto(Fingerprint(0, 8), Fingerprint(0, 8)) == 1.0

    def test_width_mismatch(self):
        with pytest.raises(ScorerError):
            tanimoto(Fingerprint(1, 8), Fingerprint(1, 16))

    @given(st.integers(0, 255), st.integers(0, 255))
    def test_symmetric_and_identity(self, a_bits, b_bits):
        a, b = Fingerprint(a_bits, 8), Fingerprint(b_bits, 8)
        assert tanimoto(a, b) == tanimoto(b, a)
        assert (tanimoto(a, b) == 1.0) == (a_bits == b_bits)


class TestThresholdFilter:
    def test_inclusive_boundary(self):
        assert threshold_filter(0.2, 0.2, "at_least") == 1.0

    def test_below_fails(self):
        assert threshold_filter(0.19, 0.2, "at_least") == 0.0

    def test_at_most(self):
        assert threshold_filter(0.45, 0.5, "at_most") == 1.0


class TestKmerSurrogate:
    def test_empty_weights_gives_bias(self):
        table = KmerWeightTable(k=3, bias=2.5, weights={})
        assert kmer_surrogate_score("ACGTACGT", table) == pytest.approx(2.5)

    def test_k1_count_of_a(self):
        table = KmerWeightTable(k=1, bias=1.0, weights={"A": 1.0})
        assert kmer_surrogate_score("AAA", table) == pytest.approx(4.0)

    def test_zero_weights(self):
        table = KmerWeightTable(k=2, bias=-0.5, weights={"AA": 0.0, "CC": 0.0})
        assert kmer_surrogate_score("AACC", table) == pytest.approx(-0.5)

    def test_parse_weight_table(self):
        table = parse_weight_table("k=2 bias=0.5\nAA 1.0\nGC -2.0\n")
        assert table.k == 2 and table.bias == 0.5
        assert table.weights == {"AA": 1.0, "GC": -2.0}

    def test_parse_rejects_wrong_kmer_length(self):
        with pytest.raises(ScorerError):
            parse_weight_table("k=2 bias=0\nAAA 1.0\n")

    def test_short_sequence_errors(self):
        with pytest.raises(ScorerError):
            kmer_surrogate_score("A", KmerWeightTable(k=2, bias=0, weights={}))


class TestKmerNovelty:
    def test_empty_reference_is_one(self):
        # empty archive is maximally novel by definition
        assert kmer_novelty("ACGTAC", []) == 1.0

    def test_identical_reference_is_zero(self):
        seq = "ACGTACGTAA"
        ref = [kmer_unit_vector(seq, 6)]
        assert kmer_novelty(seq, ref) == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_kmers_is_one(self):
        ref = [kmer_unit_vector("A" * 12, 6)]
        assert kmer_novelty("C" * 12, ref) == pytest.approx(1.0)

    def test_short_sequence_errors(self):
        with pytest.raises(ScorerError, match="shorter than k"):
            kmer_novelty("ACGTA", [])

    @given(st.text(alphabet="ACGT", min_size=6, max_size=60))
    def test_self_in_reference_zeroes_novelty(self, seq):
        refs = [kmer_unit_vector("ACGTACGTACGT", 6), kmer_unit_vector(seq, 6)]
        assert kmer_novelty(seq, refs) == pytest.approx(0.0, abs=1e-9)


def brute_force_enrichment(text: str, motifs) -> float:
    """Window-by-window oracle: score every forward and reverse-complement
    window directly from the matrix, summing margins above threshold."""
    total = 0.0
    for lom, threshold in motifs:
        w = lom.width
        for i in range(len(text) - w + 1):
            window = text[i : i + w]
            for probe in (window, window.translate(REVCOMP)[::-1]):
                s = sum(lom.lom[pwm.BASE_INDEX[c], j] for j, c in enumerate(probe))
                if s >= threshold:
                    total += s - threshold
    return total


class TestMotifEnrichment:
    def _motif(self, seed: int, width: int):
        rng = np.random.default_rng(seed)
        counts = pwm.MotifCounts("m", "m", rng.integers(0, 20, size=(4, width)).astype(float))
        return pwm.log_odds(counts, pseudocount=0.2)

    def test_no_hits_scores_zero(self):
        lom = self._motif(1, 4)
        assert motif_enrichment_score("ACGTACGTAC", [(lom, math.inf)]) == 0.0

    def test_hit_exactly_at_threshold_contributes_zero(self):
        lom = self._motif(2, 3)
        seq = "ACGTAC"
        best = max(h.score for h in pwm.scan(seq, lom, -100.0))
        assert motif_enrichment_score(seq, [(lom, best)]) == pytest.approx(0.0, abs=1e-12)

    def test_matches_window_sum_oracle(self):
        # one 4-wide motif over a 10-mer at p=0.05, checked window by window
        lom = self._motif(3, 4)
        threshold = pwm.threshold_for_pvalue(lom, 0.05)
        seq = "ACGGTTACGT"
        mine = motif_enrichment_score(seq, [(lom, threshold)])
        assert mine == pytest.approx(brute_force_enrichment(seq, [(lom, threshold)]), abs=1e-9)

    def test_non_increasing_as_pvalue_decreases(self):
        lom = self._motif(4, 5)
        seq = "".join(random_sequences(1, 80, seed=5))
        values = []
        for p in (0.5, 0.1, 0.01, 0.001):
            t = pwm.threshold_for_pvalue(lom, p)
            values.append(motif_enrichment_score(seq, [(lom, t)]))
        assert values == sorted(values, reverse=True)

    def test_empty_motif_set_rejected(self):
        with pytest.raises(ScorerError):
            motif_enrichment_score("ACGT", [])


class TestRegistry:
    def test_all_expected_descriptors_present(self):
        reg = default_registry()
        ids = {d.descriptor_id for d in reg.descriptors()}
        assert {
            "gc_homopolymer_penalty",
            "stability_hinge",
            "composite_specificity",
            "offtarget_ratio",
            "motif_enrichment",
            "kmer_novelty",
            "avg_pairwise_hamming",
            "mw_sigmoid_penalty",
            "tanimoto_similarity",
            "threshold_filter",
            "kmer_surrogate_score",
        } <= ids

    def test_param_defaults_fill_in(self):
        scorer = default_registry().bind("stability_hinge")
        assert scorer.params["margin"] == 0.15
        assert scorer.score_candidate(Sequence("GC" * 70 + "AT" * 30)) == pytest.approx(0.10)

    def test_unknown_param_rejected(self):
        with pytest.raises(ScorerError, match="unknown parameter"):
            default_registry().bind("stability_hinge", {"nope": 1})

    def test_unknown_descriptor(self):
        with pytest.raises(ScorerError, match="unknown scoring function"):
            default_registry().bind("does_not_exist")

    def test_attribute_scorer_missing_key(self):
        scorer = default_registry().bind("mw_sigmoid_penalty")
        with pytest.raises(Exception, match="attribute not present"):
            scorer.score_candidate(Attributes({"molweight": 300.0}))

    def test_surrogate_scorer_from_file(self, tmp_path):
        table = tmp_path / "w.txt"
        table.write_text("k=1 bias=0.0\nA 1.0\n")
        scorer = default_registry().bind("kmer_surrogate_score", {"table_file": str(table)})
        assert scorer.score_candidate(Sequence("AAGA")) == pytest.approx(3.0)

    def test_determinism(self, tmp_path):
        table = tmp_path / "w.txt"
        table.write_text("k=2 bias=0.1\nAC 0.7\nGT -0.2\n")
        scorer = default_registry().bind("kmer_surrogate_score", {"table_file": str(table)})
        seq = Sequence("ACGTACGTAC")
        assert scorer.score_candidate(seq) == scorer.score_candidate(seq)


class TestEvaluator:
    def _setup(self, tmp_path):
        table = tmp_path / "w.txt"
        table.write_text("k=1 bias=0.0\nA 1.0\n")
        objs = [
            make_objective(
                "count_a",
                binding=ScorerBinding("kmer_surrogate_score", {"table_file": str(table)}),
            ),
            make_objective(
                "pass_half",
                kind=ObjectiveKind.FILTER,
                direction=Direction.NOT_APPLICABLE,
                binding=ScorerBinding(
                    "threshold_filter",
                    {"of_objective": "count_a", "threshold": 2.0, "direction": "at_least"},
                ),
            ),
        ]
        agg = AggregationSpec(normalizers={"count_a": Normalizer(0, 4)})
        return Evaluator(objs, agg)

    def test_scores_filters_and_aggregates(self, tmp_path):
        ev = self._setup(tmp_path)
        pop = Population(
            0,
            (
                Candidate("c1", Sequence("AAAA")),
                Candidate("c2", Sequence("ACGT")),
            ),
        )
        counter = EvalCounter()
        out = ev.evaluate_population(pop, counter)
        assert counter.candidate_wise == 2
        by_id = {c.id: c for c in out.candidates}
        assert by_id["c1"].scores == {"count_a": 4.0, "pass_half": 1.0}
        assert by_id["c1"].aggregate == pytest.approx(1.0)
        assert by_id["c2"].scores["pass_half"] == 0.0
        assert by_id["c2"].aggregate == 0.0

    def test_budget_admission_drops_tail(self, tmp_path):
        ev = self._setup(tmp_path)
        pop = Population(0, tuple(Candidate(f"c{i}", Sequence("AAAA")) for i in range(5)))
        counter = EvalCounter()
        out = ev.evaluate_population(pop, counter, budget=3)
        assert len(out.candidates) == 3
        assert counter.candidate_wise == 3

    def test_already_scored_candidates_skip_scorers(self, tmp_path):
        ev = self._setup(tmp_path)
        scored = Candidate("c1", Sequence("AAAA"), scores={"count_a": 4.0})
        counter = EvalCounter()
        out = ev.evaluate_population(Population(0, (scored,)), counter)
        assert counter.candidate_wise == 0
        assert out.candidates[0].aggregate == pytest.approx(1.0)

    def test_reaggregation_reproduces_cache(self, tmp_path):
        ev = self._setup(tmp_path)
        pop = Population(0, (Candidate("c1", Sequence("AAGA")),))
        out = ev.evaluate_population(pop, EvalCounter())
        cand = out.candidates[0]
        assert ev.aggregate_scores(cand.scores) == pytest.approx(cand.aggregate, abs=1e-12)

    def test_kind_mismatch_rejected(self, tmp_path):
        objs = [
            make_objective(
                "diversity",
                kind=ObjectiveKind.CANDIDATE_WISE,
                binding=ScorerBinding("avg_pairwise_hamming"),
            )
        ]
        with pytest.raises(ScorerError, match="bound to"):
            Evaluator(objs, AggregationSpec(normalizers={"diversity": Normalizer(0, 1)}))

    def test_unbound_objective_rejected(self):
        with pytest.raises(ScorerError, match="no scorer binding"):
            Evaluator([make_objective("x")], AggregationSpec())

    def test_unbounded_range_requires_normalizer(self, tmp_path):
        table = tmp_path / "w.txt"
        table.write_text("k=1 bias=0.0\nA 1.0\n")
        objs = [
            make_objective(
                "count_a",
                binding=ScorerBinding("kmer_surrogate_score", {"table_file": str(table)}),
            )
        ]
        with pytest.raises(ScorerError, match="unbounded"):
            Evaluator(objs, AggregationSpec())

    def test_finite_descriptor_range_is_default_normalizer(self):
        objs = [
            make_objective(
                "nov",
                binding=ScorerBinding("kmer_novelty", {}),
            )
        ]
        ev = Evaluator(objs, AggregationSpec())
        assert ev.normalizers["nov"] == Normalizer(0.0, 1.0, clamp=True)

    def test_population_wise_scores_shared(self):
        objs = [
            make_objective(
                "div",
                kind=ObjectiveKind.POPULATION_WISE,
                binding=ScorerBinding("avg_pairwise_hamming"),
            )
        ]
        ev = Evaluator(objs, AggregationSpec(normalizers={"div": Normalizer(0, 4)}))
        pop = Population(0, (Candidate("c1", Sequence("AAAA")), Candidate("c2", Sequence("TTTT"))))
        counter = EvalCounter()
        out = ev.evaluate_population(pop, counter)
        assert counter.population_wise == 1
        assert all(c.scores["div"] == 4.0 for c in out.candidates)
