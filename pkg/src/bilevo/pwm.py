"""Position-weight-matrix machinery: JASPAR parsing, log-odds scoring,
exact p-value thresholds via dynamic programming, and two-strand scanning.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence as Seq

import numpy as np

from .core import EngineError, Sequence

BASES = "ACGT"
BASE_INDEX = {b: i for i, b in enumerate(BASES)}
UNIFORM_BACKGROUND = np.full(4, 0.25)

# complement of base i under A,C,G,T row order is base 3-i
_COMPLEMENT = np.array([3, 2, 1, 0])


class PwmError(EngineError):
    """Raised for malformed motif inputs or invalid scan parameters."""


class Strand(str, Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


@dataclass(frozen=True)
class MotifCounts:
    """Raw 4 x w count matrix, rows in A,C,G,T order."""

    motif_id: str
    name: str
    counts: np.ndarray

    def __post_init__(self) -> None:
        if self.counts.shape[0] != 4 or self.counts.shape[1] < 1:
            raise PwmError(f"motif {self.motif_id!r}: counts must be 4 x w with w >= 1")
        if (self.counts < 0).any():
            raise PwmError(f"motif {self.motif_id!r}: negative counts")

    @property
    def width(self) -> int:
        return int(self.counts.shape[1])


@dataclass(frozen=True)
class LogOddsMatrix:
    motif_id: str
    lom: np.ndarray
    background: np.ndarray
    pseudocount: float

    @property
    def width(self) -> int:
        return int(self.lom.shape[1])

    def max_score(self) -> float:
        return float(self.lom.max(axis=0).sum())

    def min_score(self) -> float:
        return float(self.lom.min(axis=0).sum())


@dataclass(frozen=True)
class MotifHit:
    motif_id: str
    position: int
    strand: Strand
    score: float
    threshold: float


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^>\s*(\S+)\s*(.*)$")
_ROW_RE = re.compile(r"^([ACGTacgt])\s*\[?\s*([-0-9.eE+\s]*?)\s*\]?\s*$")


def parse_jaspar(text: str) -> list[MotifCounts]:
    """Parse JASPAR count-matrix records; row order normalized to A,C,G,T."""
    records: list[MotifCounts] = []
    header: tuple[str, str] | None = None
    rows: dict[str, list[float]] = {}
    header_line = 0

    def flush(line_no: int) -> None:
        nonlocal header, rows
        if header is None:
            return
        missing = [b for b in BASES if b not in rows]
        if missing:
            raise PwmError(
                f"line {line_no}: record {header[0]!r} missing base row(s) {missing}"
            )
        widths = {len(rows[b]) for b in BASES}
        if len(widths) != 1:
            raise PwmError(f"line {line_no}: record {header[0]!r} has ragged rows {sorted(widths)}")
        if widths == {0}:
            raise PwmError(f"line {line_no}: record {header[0]!r} has empty rows")
        counts = np.array([rows[b] for b in BASES], dtype=float)
        if (counts < 0).any():
            raise PwmError(f"line {line_no}: record {header[0]!r} has negative counts")
        records.append(MotifCounts(motif_id=header[0], name=header[1] or header[0], counts=counts))
        header, rows = None, {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _HEADER_RE.match(line)
        if m:
            flush(line_no)
            header = (m.group(1), m.group(2).strip())
            header_line = line_no
            continue
        m = _ROW_RE.match(line)
        if not m:
            raise PwmError(f"line {line_no}: unparseable row {line!r}")
        if header is None:
            raise PwmError(f"line {line_no}: count row before any '>' header")
        base = m.group(1).upper()
        if base in rows:
            raise PwmError(f"line {line_no}: duplicate {base} row in record started at line {header_line}")
        try:
            rows[base] = [float(tok) for tok in m.group(2).split()]
        except ValueError as exc:
            raise PwmError(f"line {line_no}: bad number in {base} row: {exc}") from exc
    flush(line_no if text.strip() else 0)
    return records


# ---------------------------------------------------------------------------
# Log-odds and p-value thresholds
# ---------------------------------------------------------------------------


def log_odds(
    m: MotifCounts,
    background: np.ndarray | Seq[float] = UNIFORM_BACKGROUND,
    pseudocount: float = 0.2,
) -> LogOddsMatrix:
    """lom[b][j] = ln((counts[b][j]+pc) / (col_total+4*pc)) - ln(background[b]).

    pseudocount is the per-cell additive constant and must be > 0.
    """
    bg = np.asarray(background, dtype=float)
    if bg.shape != (4,) or (bg <= 0).any():
        raise PwmError("background must be 4 strictly positive probabilities")
    if abs(float(bg.sum()) - 1.0) > 1e-9:
        raise PwmError(f"background must sum to 1, got {float(bg.sum())}")
    if pseudocount <= 0:
        raise PwmError("pseudocount must be > 0")
    totals = m.counts.sum(axis=0)
    lom = np.log((m.counts + pseudocount) / (totals + 4.0 * pseudocount)) - np.log(bg)[:, None]
    return LogOddsMatrix(motif_id=m.motif_id, lom=lom, background=bg, pseudocount=pseudocount)


def threshold_for_pvalue(lom: LogOddsMatrix, p: float, granularity: float = 1e-3) -> float:
    """Smallest score-grid threshold t with P(score(W) >= t) <= p for random W.

    Scores are discretized by rounding each matrix cell down to a multiple
    of `granularity`; the word-score distribution is the exact convolution
    of the per-column cell distributions under the background. Returns
    +inf when no achievable score has tail probability <= p.
    """
    if granularity <= 0:
        raise PwmError("granularity must be > 0")
    if not 0 < p <= 1:
        raise PwmError("p must lie in (0, 1]")
    bins = np.floor(lom.lom / granularity).astype(np.int64)
    if p >= 1.0:  # every word qualifies; avoid float-tail wobble at the boundary
        return float(int(bins.min(axis=0).sum()) * granularity)
    # dist_cur[i] = P(binned partial score == cum_lo + i) after each column
    cum_lo = 0
    dist_cur = np.array([1.0])
    for j in range(lom.width):
        col = bins[:, j]
        col_lo, col_hi = int(col.min()), int(col.max())
        new = np.zeros(len(dist_cur) + (col_hi - col_lo))
        for b in range(4):
            shift = int(col[b]) - col_lo
            new[shift : shift + len(dist_cur)] += dist_cur * lom.background[b]
        dist_cur = new
        cum_lo += col_lo
    # tail[i] = P(binned score >= cum_lo + i)
    tail = np.cumsum(dist_cur[::-1])[::-1]
    passing = np.nonzero(tail <= p)[0]
    if len(passing) == 0:
        return math.inf
    return float((cum_lo + int(passing[0])) * granularity)


# ---------------------------------------------------------------------------
# Scanning
# ---------------------------------------------------------------------------


def encode(seq: Sequence | str) -> np.ndarray:
    text = seq.text if isinstance(seq, Sequence) else seq
    try:
        return np.array([BASE_INDEX[c] for c in text], dtype=np.int64)
    except KeyError as exc:
        raise PwmError(f"sequence contains non-ACGT character {exc.args[0]!r}") from exc


def reverse_complement(text: str) -> str:
    comp = {"A": "T", "C": "G", "G": "C", "T": "A"}
    return "".join(comp[c] for c in reversed(text))


def window_scores(codes: np.ndarray, lom_matrix: np.ndarray) -> np.ndarray:
    """Score every forward window of width w under a 4 x w matrix."""
    w = lom_matrix.shape[1]
    n = len(codes) - w + 1
    if n <= 0:
        return np.zeros(0)
    scores = np.zeros(n)
    for j in range(w):
        scores += lom_matrix[codes[j : j + n], j]
    return scores


def scan(seq: Sequence | str, lom: LogOddsMatrix, threshold: float) -> list[MotifHit]:
    """Hits with score >= threshold on both strands, forward coordinates.

    Ordered by position, forward strand before reverse at equal positions.
    A sequence shorter than the motif yields an empty list.
    """
    codes = encode(seq)
    if len(codes) < lom.width:
        return []
    fwd = window_scores(codes, lom.lom)
    # reverse-complement scan: flip rows (complement) and columns (reverse)
    rev = window_scores(codes, lom.lom[::-1, ::-1])
    hits: list[MotifHit] = []
    for i in range(len(fwd)):
        if fwd[i] >= threshold:
            hits.append(MotifHit(lom.motif_id, i, Strand.FORWARD, float(fwd[i]), threshold))
        if rev[i] >= threshold:
            hits.append(MotifHit(lom.motif_id, i, Strand.REVERSE, float(rev[i]), threshold))
    return hits
