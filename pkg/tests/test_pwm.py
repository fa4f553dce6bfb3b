from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from bilevo import pwm
from bilevo.pwm import (
    LogOddsMatrix,
    MotifCounts,
    PwmError,
    Strand,
    log_odds,
    parse_jaspar,
    reverse_complement,
    scan,
    threshold_for_pvalue,
)

SINGLE_RECORD = """
>M1 TESTMOTIF
A [ 1 1 1 1 ]
C [ 1 1 1 1 ]
G [ 1 1 1 1 ]
T [ 1 1 1 1 ]
"""

TWO_RECORDS = SINGLE_RECORD + """
>M2 OTHER
A  3 0
C  0 3
G  1 1
T  0 0
"""


def random_motif(rng: np.random.Generator, width: int) -> MotifCounts:
    counts = rng.integers(0, 30, size=(4, width)).astype(float)
    return MotifCounts(f"R{width}", f"R{width}", counts)


def brute_force_threshold(lom: LogOddsMatrix, p: float, granularity: float) -> float:
    """Exhaustive 4^w oracle: smallest grid threshold whose enumerated tail is <= p.

    Candidate thresholds are every achievable binned word score plus its
    successor bin (the tail only changes there); anything above the maximal
    word means no word passes, reported as +inf.
    """
    bins = np.floor(lom.lom / granularity).astype(int)
    probs: dict[int, float] = {}
    for word in itertools.product(range(4), repeat=lom.width):
        s = int(sum(bins[b][j] for j, b in enumerate(word)))
        pr = float(np.prod([lom.background[b] for b in word]))
        probs[s] = probs.get(s, 0.0) + pr
    lo, hi = min(probs), max(probs)
    for m in sorted(set(probs) | {s + 1 for s in probs}):
        if m > hi:
            return math.inf
        tail = sum(pr for s, pr in probs.items() if s >= m)
        if tail <= p:
            return m * granularity
    return math.inf


class TestParseJaspar:
    def test_single_uniform_record(self):
        records = parse_jaspar(SINGLE_RECORD)
        assert len(records) == 1
        assert records[0].motif_id == "M1"
        assert records[0].name == "TESTMOTIF"
        assert records[0].width == 4
        assert (records[0].counts == 1).all()

    def test_two_records_in_file_order(self):
        records = parse_jaspar(TWO_RECORDS)
        assert [r.motif_id for r in records] == ["M1", "M2"]
        assert records[1].width == 2

    def test_row_order_normalized(self):
        shuffled = """
>M3 SHUFFLED
T [ 4 3 ]
G [ 2 1 ]
C [ 9 8 ]
A [ 7 6 ]
"""
        ordered = """
>M3 SHUFFLED
A [ 7 6 ]
C [ 9 8 ]
G [ 2 1 ]
T [ 4 3 ]
"""
        a = parse_jaspar(shuffled)[0]
        b = parse_jaspar(ordered)[0]
        assert (a.counts == b.counts).all()

    def test_ragged_rows_error_with_line(self):
        bad = ">M1 X\nA [ 1 2 ]\nC [ 1 ]\nG [ 1 2 ]\nT [ 1 2 ]\n"
        with pytest.raises(PwmError, match="line"):
            parse_jaspar(bad)

    def test_missing_base_row(self):
        bad = ">M1 X\nA [ 1 ]\nC [ 1 ]\nG [ 1 ]\n"
        with pytest.raises(PwmError, match="missing base"):
            parse_jaspar(bad)

    def test_negative_counts(self):
        bad = ">M1 X\nA [ -1 ]\nC [ 1 ]\nG [ 1 ]\nT [ 1 ]\n"
        with pytest.raises(PwmError):
            parse_jaspar(bad)


class TestLogOdds:
    def test_uniform_counts_uniform_background_is_zero(self):
        m = parse_jaspar(SINGLE_RECORD)[0]
        lom = log_odds(m, pseudocount=1.0)
        assert np.allclose(lom.lom, 0.0)

    def test_hand_evaluated_cell(self):
        # hand evaluation: column (3,1,0,0), pc 1: A cell = ln((4/8)/0.25) = ln 2
        m = MotifCounts("m", "m", np.array([[3.0], [1.0], [0.0], [0.0]]))
        lom = log_odds(m, pseudocount=1.0)
        assert lom.lom[0, 0] == pytest.approx(math.log(2))

    def test_small_pseudocount_limit(self):
        m = MotifCounts("m", "m", np.array([[3.0], [1.0], [4.0], [2.0]]))
        lom = log_odds(m, pseudocount=1e-9)
        expected = np.log((m.counts[:, 0] / 10.0) / 0.25)
        assert np.allclose(lom.lom[:, 0], expected, atol=1e-6)

    def test_scaling_counts_and_pseudocount_invariant(self):
        m = MotifCounts("m", "m", np.array([[3.0, 1.0], [1.0, 2.0], [4.0, 0.0], [2.0, 7.0]]))
        a = log_odds(m, pseudocount=0.5)
        scaled = MotifCounts("m", "m", m.counts * 3.0)
        b = log_odds(scaled, pseudocount=1.5)
        assert np.allclose(a.lom, b.lom)

    def test_background_must_sum_to_one(self):
        m = parse_jaspar(SINGLE_RECORD)[0]
        with pytest.raises(PwmError):
            log_odds(m, background=[0.3, 0.3, 0.3, 0.3], pseudocount=1.0)

    def test_zero_pseudocount_rejected(self):
        m = parse_jaspar(SINGLE_RECORD)[0]
        with pytest.raises(PwmError):
            log_odds(m, pseudocount=0.0)


class TestThresholdForPvalue:
    def test_degenerate_uniform_motif_returns_inf(self):
        # all words score 0 -> no threshold with tail <= p exists below p=1
        m = parse_jaspar(SINGLE_RECORD)[0]
        lom = log_odds(m, pseudocount=1.0)
        assert threshold_for_pvalue(lom, 0.5) == math.inf
        assert threshold_for_pvalue(lom, 1e-4) == math.inf

    def test_p_one_returns_minimum_achievable(self):
        rng = np.random.default_rng(7)
        m = random_motif(rng, 5)
        lom = log_odds(m, pseudocount=0.2)
        t = threshold_for_pvalue(lom, 1.0)
        bins = np.floor(lom.lom / 1e-3).astype(int)
        assert t == pytest.approx(bins.min(axis=0).sum() * 1e-3)

    @pytest.mark.parametrize("width", [4, 5, 6])
    @pytest.mark.parametrize("p", [1e-1, 1e-2, 1e-3])
    def test_matches_exhaustive_enumeration(self, width, p):
        rng = np.random.default_rng(width * 1000 + int(-math.log10(p)))
        m = random_motif(rng, width)
        lom = log_odds(m, pseudocount=0.2)
        assert threshold_for_pvalue(lom, p) == pytest.approx(brute_force_threshold(lom, p, 1e-3))

    def test_non_positive_granularity_rejected(self):
        m = parse_jaspar(SINGLE_RECORD)[0]
        with pytest.raises(PwmError):
            threshold_for_pvalue(log_odds(m, pseudocount=1.0), 0.5, granularity=0.0)


def _one_column_lom(a_score: float = 1.0) -> LogOddsMatrix:
    # favors A; complement row T gets the negated score
    lom = np.array([[a_score], [-0.5], [-0.5], [-1.0]])
    return LogOddsMatrix("col", lom, pwm.UNIFORM_BACKGROUND, 0.1)


class TestScan:
    def test_infinite_threshold_empty(self):
        lom = _one_column_lom()
        assert scan("ACGTACGT", lom, math.inf) == []

    def test_short_sequence_empty_not_error(self):
        m = parse_jaspar(SINGLE_RECORD)[0]
        lom = log_odds(m, pseudocount=1.0)
        assert scan("ACG", lom, -10.0) == []

    def test_single_column_motif_both_strands(self):
        # hand evaluation: A scores 1.0 forward; reverse strand reads the complement T,
        # which scores -1.0 under the matrix, so only forward hits survive t=0
        lom = _one_column_lom()
        hits = scan("AAA", lom, 0.0)
        assert [(h.position, h.strand) for h in hits] == [
            (0, Strand.FORWARD),
            (1, Strand.FORWARD),
            (2, Strand.FORWARD),
        ]
        # with a threshold below the T score, both strands hit at every position
        hits = scan("AAA", lom, -1.5)
        assert len(hits) == 6
        assert [(h.position, h.strand) for h in hits[:2]] == [
            (0, Strand.FORWARD),
            (0, Strand.REVERSE),
        ]

    def test_palindromic_matrix_strand_symmetric(self):
        # reverse-complement-symmetric matrix: flipping rows+cols leaves it fixed
        base = np.array([[1.0, -1.0], [0.5, -0.25], [-0.25, 0.5], [-1.0, 1.0]])
        lom = LogOddsMatrix("pal", base, pwm.UNIFORM_BACKGROUND, 0.1)
        assert np.allclose(lom.lom, lom.lom[::-1, ::-1])
        hits = scan("ACGTTGCA", lom, 0.2)
        fwd = {(h.position, round(h.score, 9)) for h in hits if h.strand is Strand.FORWARD}
        rev = {(h.position, round(h.score, 9)) for h in hits if h.strand is Strand.REVERSE}
        assert fwd == rev

    def test_scan_monotone_in_threshold(self):
        rng = np.random.default_rng(3)
        m = random_motif(rng, 4)
        lom = log_odds(m, pseudocount=0.2)
        seq = "ACGTTTGACCAGTACGGATT"
        loose = {(h.position, h.strand) for h in scan(seq, lom, -1.0)}
        tight = {(h.position, h.strand) for h in scan(seq, lom, 1.0)}
        assert tight <= loose

    def test_reverse_complement_mirrors_positions(self):
        rng = np.random.default_rng(11)
        m = random_motif(rng, 5)
        lom = log_odds(m, pseudocount=0.2)
        seq = "ACGTTTGACCAGTACGGATT"
        w, L = lom.width, len(seq)
        fwd_hits = scan(seq, lom, -2.0)
        rc_hits = scan(reverse_complement(seq), lom, -2.0)
        flip = {Strand.FORWARD: Strand.REVERSE, Strand.REVERSE: Strand.FORWARD}
        mirrored = {(L - w - h.position, flip[h.strand], round(h.score, 9)) for h in rc_hits}
        original = {(h.position, h.strand, round(h.score, 9)) for h in fwd_hits}
        assert mirrored == original

    def test_hit_order_is_position_then_strand(self):
        lom = _one_column_lom()
        hits = scan("AT", lom, -5.0)
        keys = [(h.position, 0 if h.strand is Strand.FORWARD else 1) for h in hits]
        assert keys == sorted(keys)
