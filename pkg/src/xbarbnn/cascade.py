"""Cascading functions that merge per-segment sense-amp readouts into one
activation bit, plus exact and Monte-Carlo accuracy-loss analyses of the
mismatch regions they induce against the unsplit majority decision.

Policies:

* AND / OR: every / any segment above its main reference.
* F1 (conservative): fires only when the reference levels proven to lie
  below the per-segment counts already certify a strict majority, so it
  never produces a false positive.
* F2 (relaxed): additionally fires when the interval midpoint estimates of
  the per-segment counts reach half the vector size; it never produces a
  false negative but trades that for a small false-positive region.

More than two segments fold left to right by accumulating the certified
bounds (midpoints) across segments; with two segments this reduces to the
pairwise rule exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .crossbar import ReferenceSet, SAReadout

POLICY_KINDS = ("AND", "OR", "F1", "F2")


@dataclass(frozen=True)
class CascadePolicy:
    """A cascading rule plus the reference layout it assumes per segment."""

    kind: str
    refs: ReferenceSet

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown cascade kind {self.kind!r}")
        if self.kind in ("F1", "F2") and self.refs.count < 3:
            raise ValueError(f"{self.kind} needs at least one auxiliary reference pair (count >= 3)")


@dataclass(frozen=True)
class LossRegionReport:
    """Exact mismatch census of a cascade policy against the majority rule."""

    total_pairs: int
    mismatches: int
    false_positives: int
    false_negatives: int

    @property
    def loss_fraction(self) -> float:
        return self.mismatches / self.total_pairs

    @property
    def by_region(self) -> dict:
        return {"false_positive": self.false_positives, "false_negative": self.false_negatives}


@dataclass(frozen=True)
class DistSpec:
    """Input model for Monte-Carlo runs: per vector, one match probability
    p ~ Normal(0.5, sigma) truncated to [0,1]; every XNOR-result bit is then
    i.i.d. Bernoulli(p), so segment counts are binomial with a shared p."""

    sigma: float = 0.15

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    def sample_p(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = rng.normal(0.5, self.sigma, n)
        bad = (out < 0.0) | (out > 1.0)
        while bad.any():  # redraw out-of-range values: truncation, not clipping
            out[bad] = rng.normal(0.5, self.sigma, int(bad.sum()))
            bad = (out < 0.0) | (out > 1.0)
        return out


@dataclass(frozen=True)
class MonteCarloLoss:
    samples: int
    mismatches: int
    false_positives: int
    false_negatives: int
    loss_fraction: float
    ci_low: float
    ci_high: float


def decide_batch(kind: str, intervals: np.ndarray, lengths, counts_refsets, vector_size: int) -> np.ndarray:
    """Vectorized cascade decision.

    intervals: (batch, segments) interval indices from the SA readouts.
    counts_refsets: one ReferenceSet per segment (levels per segment).
    Returns a boolean array of activation bits.
    """
    intervals = np.asarray(intervals)
    n_seg = intervals.shape[1]
    count = counts_refsets[0].count
    mid = (count - 1) // 2
    if kind == "AND":
        return (intervals > mid).all(axis=1)
    if kind == "OR":
        return (intervals > mid).any(axis=1)

    # Certified lower bound per segment: the highest reference known to sit
    # strictly below the count (none when the readout is in the bottom
    # interval). Upper edge closes the interval for the midpoint estimate.
    lo_sum = np.zeros(intervals.shape[0], dtype=np.int64)
    edge_sum = np.zeros(intervals.shape[0], dtype=np.int64)
    all_certified = np.ones(intervals.shape[0], dtype=bool)
    for s in range(n_seg):
        levels = np.asarray(counts_refsets[s].levels(), dtype=np.int64)
        t = intervals[:, s]
        lo = np.where(t >= 1, levels[np.clip(t - 1, 0, count - 1)], 0)
        hi = np.where(t < count, levels[np.clip(t, 0, count - 1)], lengths[s])
        lo_sum += lo
        edge_sum += lo + hi
        all_certified &= t >= 1
    f1 = all_certified & (2 * lo_sum >= vector_size)
    if kind == "F1":
        return f1
    # midpoint estimates sum to >= vector_size/2  <=>  edge_sum >= vector_size
    return f1 | (edge_sum >= vector_size)


def cascade(policy: CascadePolicy, readouts: list[SAReadout], segment_lengths: list[int]) -> int:
    """Final activation bit from per-segment readouts."""
    if not readouts:
        raise ValueError("no readouts to cascade")
    if len(readouts) != len(segment_lengths):
        raise ValueError("one segment length per readout required")
    refsets = [policy.refs.for_segment(n) for n in segment_lengths]
    intervals = np.array([[r.interval_index for r in readouts]])
    out = decide_batch(policy.kind, intervals, segment_lengths, refsets, sum(segment_lengths))
    return int(out[0])


def region_predicate_and(d1: int, d2: int, vector_size: int) -> bool:
    """AND-policy mismatch region for an even split: the pair is a strict
    majority overall, yet at least one half is at or below its main
    reference (floor(vector_size/4), matching the strict comparator)."""
    main = vector_size // 4
    return 2 * (d1 + d2) > vector_size and (d1 <= main or d2 <= main)


def region_predicate_or(d1: int, d2: int, vector_size: int) -> bool:
    """OR-policy mismatch region, mirror of the AND one: no strict majority
    overall, yet at least one half is above its main reference."""
    main = vector_size // 4
    return 2 * (d1 + d2) <= vector_size and (d1 > main or d2 > main)


def pair_count(half: int, matches: int) -> int:
    """Number of (A, B) half-vector pairs of length `half` whose XNOR result
    has exactly `matches` ones: choose the matching positions, then A is
    free (the factor 2^m * 2^(half-m) collapses to 2^half)."""
    return math.comb(half, matches) * (1 << half)


def _intervals_for(d: np.ndarray, refs: ReferenceSet) -> np.ndarray:
    levels = np.asarray(refs.levels(), dtype=np.int64)
    return (np.asarray(d)[:, None] > levels[None, :]).sum(axis=1)


def enumerate_loss(vector_size: int, segment: int, policy: CascadePolicy) -> LossRegionReport:
    """Exact loss census over every (A, B) pair, done by weighting each
    per-half match-count cell (m, n) with its closed-form pair count.

    Both the golden rule and every cascade policy are functions of the
    per-segment counts alone, so the cell walk is exhaustive over raw
    vector pairs. Cost grows with vector_size^2; meant for small sizes.
    """
    if vector_size % 2 or segment != vector_size // 2:
        raise ValueError("analysis covers the even split into two equal segments")
    seg2 = vector_size - segment
    refsets = [policy.refs.for_segment(segment), policy.refs.for_segment(seg2)]

    m = np.repeat(np.arange(segment + 1), seg2 + 1)
    n = np.tile(np.arange(seg2 + 1), segment + 1)
    golden = 2 * (m + n) > vector_size
    intervals = np.stack([_intervals_for(m, refsets[0]), _intervals_for(n, refsets[1])], axis=1)
    out = decide_batch(policy.kind, intervals, [segment, seg2], refsets, vector_size)

    weights_m = [pair_count(segment, int(v)) for v in range(segment + 1)]
    weights_n = [pair_count(seg2, int(v)) for v in range(seg2 + 1)]
    fp = fn = 0
    for i in range(m.size):  # python ints: counts overflow int64 past nu ~ 30
        if out[i] == golden[i]:
            continue
        w = weights_m[int(m[i])] * weights_n[int(n[i])]
        if out[i]:
            fp += w
        else:
            fn += w
    total = (1 << (2 * segment)) * (1 << (2 * seg2))
    return LossRegionReport(total, fp + fn, fp, fn)


def _wilson(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    phat = k / n
    denom = 1 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def monte_carlo_loss(
    policy: CascadePolicy,
    vector_size: int,
    segment: int,
    distribution: DistSpec,
    samples: int,
    seed: int,
) -> MonteCarloLoss:
    """Loss estimate with a 95% Wilson interval; deterministic for a seed."""
    if samples < 1:
        raise ValueError("need at least one sample")
    seg2 = vector_size - segment
    refsets = [policy.refs.for_segment(segment), policy.refs.for_segment(seg2)]
    rng = np.random.default_rng(seed)
    p = distribution.sample_p(rng, samples)
    d1 = rng.binomial(segment, p)
    d2 = rng.binomial(seg2, p)
    golden = 2 * (d1 + d2) > vector_size
    intervals = np.stack([_intervals_for(d1, refsets[0]), _intervals_for(d2, refsets[1])], axis=1)
    out = decide_batch(policy.kind, intervals, [segment, seg2], refsets, vector_size)
    fp = int((out & ~golden).sum())
    fn = int((~out & golden).sum())
    lo, hi = _wilson(fp + fn, samples)
    return MonteCarloLoss(samples, fp + fn, fp, fn, (fp + fn) / samples, lo, hi)


@dataclass(frozen=True)
class SweepRow:
    policy: str
    vector_size: int
    segment: int
    ref_count: int
    distance: int
    result: MonteCarloLoss


def sweep_reference_distance(
    policy: CascadePolicy,
    vector_size: int,
    segment: int,
    x_grid,
    distribution: DistSpec,
    samples: int,
    seed: int,
) -> tuple[list[SweepRow], list[tuple[int, str]]]:
    """One Monte-Carlo row per admissible auxiliary-reference distance.

    Distances whose references would leave the valid range are rejected and
    reported with a diagnostic instead of a row. Per-row seeds are spawned
    from the sweep seed by grid index, so rejections do not shift streams.
    """
    rows, rejected = [], []
    children = np.random.SeedSequence(seed).spawn(len(list(x_grid)))
    for i, x in enumerate(x_grid):
        try:
            refs = ReferenceSet(policy.refs.segment_length, int(x), policy.refs.count)
            row_policy = CascadePolicy(policy.kind, refs)
            # both segments must admit the layout before any sampling
            row_policy.refs.for_segment(segment)
            row_policy.refs.for_segment(vector_size - segment)
        except ValueError as err:
            rejected.append((int(x), str(err)))
            continue
        row_seed = int(children[i].generate_state(1)[0])
        result = monte_carlo_loss(row_policy, vector_size, segment, distribution, samples, row_seed)
        rows.append(SweepRow(policy.kind, vector_size, segment, policy.refs.count, int(x), result))
    return rows, rejected


SWEEP_CSV_COLUMNS = (
    "policy", "nu", "segment", "ref_count", "x",
    "loss_fraction", "ci_low", "ci_high", "mismatch_fp", "mismatch_fn",
)


def sweep_rows_to_csv(rows: list[SweepRow], header_lines: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header_lines or []:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_CSV_COLUMNS)
    for r in rows:
        writer.writerow([
            r.policy, r.vector_size, r.segment, r.ref_count, r.distance,
            f"{r.result.loss_fraction:.6g}", f"{r.result.ci_low:.6g}", f"{r.result.ci_high:.6g}",
            r.result.false_positives, r.result.false_negatives,
        ])
    return buf.getvalue()
