"""Tour of the built-in scoring functions on DNA sequences and attributes.

Each scorer is a pure function; the registry wraps them with parameter
schemas so the implementer agent can bind them to objectives.
"""

from bilevo.core import Attributes, Fingerprint, Sequence
from bilevo.scorers import (
    composite_specificity,
    default_registry,
    gc_homopolymer_penalty,
    kmer_novelty,
    kmer_unit_vector,
    mw_sigmoid_penalty,
    offtarget_ratio,
    stability_hinge,
    tanimoto,
)

print("== sequence stability ==")
for label, seq in [
    ("balanced 200-mer", "GC" * 45 + "AT" * 55),
    ("ACGT repeat", "ACGT" * 50),
    ("GC-heavy", "GC" * 70 + "AT" * 30),
    ("poly-G", "G" * 200),
]:
    penalty = gc_homopolymer_penalty(seq)
    hinge = stability_hinge(seq)
    print(f"  {label:18s} penalty={penalty:7.3f} hinge={hinge:7.3f}")

print("\n== composite specificity (on-target minus hinged off-target) ==")
for h, k, n in [(2.0, 0.05, 0.30), (1.5, 0.08, 0.02), (0.0, 1.10, 1.10)]:
    print(f"  h={h:4.2f} k={k:4.2f} n={n:4.2f} -> {composite_specificity(h, k, n):+.3f}")

print("\n== off-target leakage ratio (epsilon-stabilized) ==")
for num, denom in [(0.5, 1.0), (0.5, 0.1), (0.0, 0.0)]:
    print(f"  {num}/{denom} -> {offtarget_ratio(num, denom):.3f}")

print("\n== molecular-weight sigmoid on attribute payloads ==")
for mw in (150, 450, 500, 700):
    print(f"  mw={mw:4d} -> {mw_sigmoid_penalty(mw):.4f}")

print("\n== k-mer novelty against a reference archive ==")
archive = [kmer_unit_vector("ACGTACGTACGTACGTACGT", 6)]
for label, seq in [
    ("identical", "ACGTACGTACGTACGTACGT"),
    ("shifted", "CGTACGTACGTACGTACGTA"),
    ("unrelated", "GGGGGGCCCCCCGGGGGGCC"),
]:
    print(f"  {label:10s} novelty={kmer_novelty(seq, archive):.4f}")

print("\n== tanimoto similarity on bit fingerprints ==")
a = Fingerprint(0b11110000, 8)
b = Fingerprint(0b11000011, 8)
print(f"  a~a = {tanimoto(a, a):.3f}, a~b = {tanimoto(a, b):.3f}")

print("\n== the registry the implementer matches against ==")
for d in default_registry().descriptors():
    print(f"  {d.descriptor_id:24s} {d.kind.value:15s} hint={d.direction_hint}")

print("\n== binding a scorer through the registry ==")
scorer = default_registry().bind("mw_sigmoid_penalty", {"attr_key": "mw"})
print("  mw_sigmoid_penalty(mw=480) =", scorer.score_candidate(Attributes({"mw": 480.0})))
