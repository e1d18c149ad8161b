"""Functional model of a memristor crossbar running XNOR-dot columns in
parallel, with sense-amplifier thresholding and column splitting for weight
vectors longer than the array.

The array itself is ideal: every bitline popcount is exact, and all accuracy
loss comes from splitting a vector over several columns and recombining the
per-column threshold readouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bincore import BinaryTensor, popcount, xnor


@dataclass(frozen=True)
class CrossbarConfig:
    """Array geometry: wordlines (rows) by bitlines (cols)."""

    rows: int = 512
    cols: int = 512

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("crossbar dimensions must be positive")

    @classmethod
    def parse(cls, text: str) -> "CrossbarConfig":
        """Parse 'RxC' strings such as '512x512'."""
        try:
            rows, cols = (int(p) for p in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"bad crossbar geometry {text!r}, expected e.g. 512x512") from None
        return cls(rows, cols)


@dataclass(frozen=True)
class ReferenceSet:
    """Sense-amplifier thresholds for one column segment.

    The main reference sits at half the segment's logical length; `count`
    (odd) references total, the auxiliary ones at multiples of `distance`
    around the main. All references must lie strictly inside (0, length).
    """

    segment_length: int
    distance: int = 0
    count: int = 1

    def __post_init__(self):
        if self.segment_length < 2:
            raise ValueError("segment too short for a reference")
        if self.count < 1 or self.count % 2 == 0:
            raise ValueError("reference count must be odd and positive")
        if self.count > 1 and self.distance < 1:
            raise ValueError("auxiliary references need a positive distance")
        half = (self.count - 1) // 2
        if self.main - half * self.distance <= 0 or self.main + half * self.distance >= self.segment_length:
            raise ValueError(
                f"references outside (0, {self.segment_length}): "
                f"main={self.main} distance={self.distance} count={self.count}"
            )

    @property
    def main(self) -> int:
        return self.segment_length // 2

    def levels(self) -> tuple[int, ...]:
        """All thresholds, strictly increasing; the main is the middle one."""
        half = (self.count - 1) // 2
        return tuple(self.main + j * self.distance for j in range(-half, half + 1))

    def for_segment(self, segment_length: int) -> "ReferenceSet":
        """Same reference layout retargeted to another segment length."""
        return ReferenceSet(segment_length, self.distance, self.count)


@dataclass(frozen=True)
class SAReadout:
    """Which inter-reference interval a column level landed in.

    interval_index counts references strictly below the level, so 0 means
    at-or-below the lowest reference and `count` means above the highest.
    One comparison cycle is spent per reference.
    """

    interval_index: int
    cycles_used: int


@dataclass(frozen=True)
class MappedColumnGroup:
    """One logical weight vector split over contiguous column segments.

    Pad cells past the logical length hold weight bit 0 and are driven with
    input bit 1, so each pad position XNORs to 0 and never disturbs the
    bitline popcount.
    """

    vector_size: int
    segment_length: int
    splits: int
    segments: tuple[BinaryTensor, ...] = field(repr=False)
    owner: tuple | None = None

    @property
    def logical_lengths(self) -> tuple[int, ...]:
        full, last = divmod(self.vector_size, self.segment_length)
        lens = [self.segment_length] * full
        if last:
            lens.append(last)
        return tuple(lens)


def map_weights(w: BinaryTensor, cfg: CrossbarConfig, owner=None) -> MappedColumnGroup:
    """Split a weight vector into column segments of at most cfg.rows bits."""
    n = w.size
    if n < 1:
        raise ValueError("empty weight vector")
    rows = cfg.rows
    splits = -(-n // rows)
    bits = w.bits().ravel()
    segments = []
    for s in range(splits):
        chunk = bits[s * rows : (s + 1) * rows]
        if chunk.size < rows and splits > 1:
            chunk = np.concatenate([chunk, np.zeros(rows - chunk.size, dtype=np.uint8)])
        segments.append(BinaryTensor.from_bits(chunk))
    return MappedColumnGroup(n, rows if splits > 1 else n, splits, tuple(segments), owner)


def split_inputs(a: BinaryTensor, group: MappedColumnGroup) -> tuple[BinaryTensor, ...]:
    """Slice an input vector to match a group's segments, pad lines driven to 1."""
    if a.size != group.vector_size:
        raise ValueError(f"input length {a.size} does not match group ({group.vector_size})")
    bits = a.bits().ravel()
    rows = group.segment_length
    out = []
    for s in range(group.splits):
        chunk = bits[s * rows : (s + 1) * rows]
        if chunk.size < rows and group.splits > 1:
            chunk = np.concatenate([chunk, np.ones(rows - chunk.size, dtype=np.uint8)])
        out.append(BinaryTensor.from_bits(chunk))
    return tuple(out)


def column_popcount(inputs: BinaryTensor, weights: BinaryTensor) -> int:
    """Bitline summation for one column: popcount of the XNOR result."""
    if inputs.size != weights.size:
        raise ValueError(f"segment length mismatch: {inputs.size} vs {weights.size}")
    return popcount(xnor(inputs, weights))


def sa_read(level: int, refs: ReferenceSet) -> SAReadout:
    """Threshold a column level against every reference (strict > comparator)."""
    if not 0 <= level <= refs.segment_length:
        raise ValueError(f"level {level} outside [0, {refs.segment_length}]")
    idx = sum(level > r for r in refs.levels())
    return SAReadout(idx, refs.count)


def layer_forward(inputs: BinaryTensor, group: MappedColumnGroup, refs: ReferenceSet, policy) -> int:
    """Activation bit for one mapped weight vector.

    With a single segment this is the exact majority decision; with several
    segments the per-segment readouts pass through the cascade policy.
    """
    from .cascade import cascade

    lengths = group.logical_lengths
    readouts = []
    for seg_in, seg_w, length in zip(split_inputs(inputs, group), group.segments, lengths):
        level = column_popcount(seg_in, seg_w)
        readouts.append(sa_read(level, refs.for_segment(length)))
    if group.splits == 1:
        mid = (refs.count - 1) // 2
        return 1 if readouts[0].interval_index > mid else 0
    return cascade(policy, readouts, list(lengths))
