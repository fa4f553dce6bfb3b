from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bilevo.core import (
    AggregationError,
    AggregationMethod,
    Candidate,
    Direction,
    Fingerprint,
    Normalizer,
    Objective,
    ObjectiveKind,
    Population,
    ScoreRecord,
    Sequence,
    ValidationError,
    aggregate,
    payload_from_dict,
    population_stats,
)

from helpers import make_candidate, make_objective


class TestPayloads:
    def test_sequence_rejects_empty(self):
        with pytest.raises(ValidationError):
            Sequence("")

    def test_sequence_rejects_foreign_characters(self):
        with pytest.raises(ValidationError):
            Sequence("ACGX")

    def test_fingerprint_round_trips_hex(self):
        fp = Fingerprint.from_hex("0f3a", 16)
        assert fp.to_hex() == "0f3a"
        assert fp.popcount() == 8

    def test_fingerprint_rejects_overflow(self):
        with pytest.raises(ValidationError):
            Fingerprint(bits=1 << 8, width=8)

    def test_payload_serde_round_trip(self):
        for payload in (Sequence("ACGT"), Fingerprint(0b1011, 4)):
            assert payload_from_dict(payload.to_dict()) == payload


class TestObjectiveValidation:
    def test_filter_requires_not_applicable_direction(self):
        with pytest.raises(ValidationError):
            make_objective("f", kind=ObjectiveKind.FILTER, direction=Direction.MAXIMIZE)

    def test_filter_rejects_weight(self):
        with pytest.raises(ValidationError):
            Objective(
                id="f",
                name="f",
                description="",
                kind=ObjectiveKind.FILTER,
                direction=Direction.NOT_APPLICABLE,
                weight=1.0,
            )

    def test_non_filter_requires_direction(self):
        with pytest.raises(ValidationError):
            make_objective("x", direction=Direction.NOT_APPLICABLE)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            make_objective("x", weight=-0.5)

    def test_filter_score_record_must_be_binary(self):
        with pytest.raises(ValidationError):
            ScoreRecord("f", 0.5, is_filter=True)


class TestAggregate:
    def _objs(self):
        return [make_objective("a"), make_objective("b")]

    def _norms(self):
        return {"a": Normalizer(0, 1, clamp=False), "b": Normalizer(0, 1, clamp=False)}

    def test_all_ones_no_filters_is_identity(self):
        # identity case
        assert aggregate({"a": 1.0, "b": 1.0}, self._objs(), normalizers=self._norms()) == 1.0

    def test_failing_filter_annihilates(self):
        # a failing filter annihilates everything else
        objs = self._objs() + [
            make_objective("f", kind=ObjectiveKind.FILTER, direction=Direction.NOT_APPLICABLE)
        ]
        scores = {"a": 1.0, "b": 1.0, "f": 0.0}
        assert aggregate(scores, objs, normalizers=self._norms()) == 0.0

    def test_simple_product_hand_value(self):
        # hand evaluation: 0.5 * 0.8 = 0.4
        value = aggregate({"a": 0.5, "b": 0.8}, self._objs(), normalizers=self._norms())
        assert value == pytest.approx(0.4, abs=1e-12)

    def test_missing_score_raises(self):
        with pytest.raises(AggregationError, match="unscored objective"):
            aggregate({"a": 0.5}, self._objs(), normalizers=self._norms())

    def test_normalizer_contract_violation(self):
        with pytest.raises(AggregationError, match="normalizer contract violated"):
            aggregate({"a": 1.5, "b": 0.5}, self._objs(), normalizers=self._norms())

    def test_minimize_direction_inverts(self):
        obj = make_objective("a", direction=Direction.MINIMIZE)
        value = aggregate({"a": 0.25}, [obj], normalizers={"a": Normalizer(0, 1)})
        assert value == pytest.approx(0.75)

    def test_weighted_sum_single_objective(self):
        objs = [make_objective("a")] + [
            make_objective("f", kind=ObjectiveKind.FILTER, direction=Direction.NOT_APPLICABLE)
        ]
        value = aggregate(
            {"a": 0.6, "f": 1.0},
            objs,
            method=AggregationMethod.WEIGHTED_SUM,
            normalizers={"a": Normalizer(0, 1)},
        )
        assert value == pytest.approx(0.6)

    def test_weights_are_exponents_in_product(self):
        obj = make_objective("a", weight=2.0)
        value = aggregate({"a": 0.5}, [obj], normalizers={"a": Normalizer(0, 1)})
        assert value == pytest.approx(0.25)

    @given(st.permutations(["a", "b", "c"]))
    def test_simple_product_permutation_invariant(self, order):
        objs = {o: make_objective(o, weight=w) for o, w in (("a", 1.0), ("b", 2.0), ("c", 0.5))}
        scores = {"a": 0.5, "b": 0.8, "c": 0.9}
        norms = {k: Normalizer(0, 1) for k in scores}
        baseline = aggregate(scores, [objs[k] for k in ("a", "b", "c")], normalizers=norms)
        assert aggregate(scores, [objs[k] for k in order], normalizers=norms) == pytest.approx(
            baseline, abs=1e-15
        )

    @given(st.floats(min_value=-5, max_value=5), st.floats(min_value=0.1, max_value=4))
    def test_normalizer_round_trip(self, lo, span):
        norm = Normalizer(lo=lo, hi=lo + span)
        assert norm.normalize(lo) == 0.0
        assert norm.normalize(lo + span) == 1.0


class TestPopulationStats:
    def test_two_point_stats(self):
        pop = Population(
            0,
            (
                make_candidate("c1", scores={"a": 0.0}),
                make_candidate("c2", scores={"a": 1.0}),
            ),
        )
        stats = population_stats(pop)["a"]
        assert (stats.mean, stats.std, stats.min, stats.max) == (0.5, 0.5, 0.0, 1.0)

    def test_single_candidate(self):
        pop = Population(0, (make_candidate("c1", scores={"a": 0.7}),))
        stats = population_stats(pop)["a"]
        assert stats.mean == pytest.approx(0.7)
        assert stats.std == 0.0

    def test_population_std_divisor_n(self):
        # hand computation: mean .5, std sqrt(0.26/3)
        pop = Population(
            0,
            tuple(
                make_candidate(f"c{i}", scores={"a": v}) for i, v in enumerate((0.2, 0.4, 0.9))
            ),
        )
        stats = population_stats(pop)["a"]
        assert stats.mean == pytest.approx(0.5)
        assert stats.std == pytest.approx(math.sqrt(0.26 / 3), abs=1e-6)
        assert stats.std == pytest.approx(0.294392, abs=1e-6)

    def test_empty_population_errors(self):
        with pytest.raises(ValidationError):
            population_stats(Population(0, ()))

    def test_mismatched_score_keys_error(self):
        pop = Population(
            0,
            (make_candidate("c1", scores={"a": 0.1}), make_candidate("c2", scores={"b": 0.1})),
        )
        with pytest.raises(ValidationError):
            population_stats(pop)


class TestSerde:
    def test_candidate_round_trip(self):
        cand = make_candidate("c9", text="ACGTACGT", scores={"a": 0.25}, aggregate=0.25)
        assert Candidate.from_dict(cand.to_dict()) == cand

    def test_objective_round_trip(self):
        obj = make_objective("a", weight=2.0)
        assert Objective.from_dict(obj.to_dict()) == obj

    def test_population_round_trip(self):
        pop = Population(3, (make_candidate("c1", scores={"a": 1.0}),))
        restored = Population.from_dict(pop.to_dict())
        assert restored == pop
