"""Column-sliced convolution mapping: kernels live in crossbar columns, the
input buffer holds the operating window as per-column channel packs, and a
slide replaces exactly one pack instead of re-streaming the whole window.

A pack is one window column across all input channels (channel-major,
kernel_k rows each). Kernels never get reprogrammed while a layer runs; an
optional lookahead pack plus a second, shifted kernel column per output
evaluates two adjacent windows from a single array read.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crossbar import CrossbarConfig


@dataclass(frozen=True)
class ConvShape:
    in_channels: int
    out_channels: int
    input_h: int = 28
    input_w: int = 28
    kernel: int = 5
    stride: int = 1

    def __post_init__(self):
        if self.kernel > self.input_h or self.kernel > self.input_w:
            raise ValueError("kernel larger than input")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if min(self.in_channels, self.out_channels) < 1:
            raise ValueError("channel counts must be positive")

    @property
    def out_h(self) -> int:
        return (self.input_h - self.kernel) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.input_w - self.kernel) // self.stride + 1

    @property
    def pack_bits(self) -> int:
        return self.in_channels * self.kernel

    @property
    def window_bits(self) -> int:
        return self.in_channels * self.kernel * self.kernel


@dataclass
class TransactionLog:
    """Bus and array activity counters for one layer traversal."""

    bus_width_bits: int = 32
    bits_streamed: int = 0
    words_streamed: int = 0
    reprogram_events: int = 0
    slides: int = 0
    wraps: int = 0

    def stream(self, bits: int, bit_width: int = 1):
        payload = bits * bit_width
        self.bits_streamed += payload
        self.words_streamed += -(-payload // self.bus_width_bits)


class CapacityError(Exception):
    """A layer does not fit one crossbar; carries the multi-array plan."""

    def __init__(self, message: str, plan: dict):
        super().__init__(message)
        self.plan = plan


@dataclass(frozen=True)
class KernelImage:
    """Programmed weight columns for one conv layer.

    columns[:, c] holds the bit pattern, active[:, c] masks the live cells;
    inert cells (logic 0 programming) never contribute to a bitline count.
    column_owner[c] = (output_channel, window_slot).
    """

    columns: np.ndarray = field(repr=False)
    active: np.ndarray = field(repr=False)
    column_owner: tuple
    rows_used: int


def layout_kernels(
    shape: ConvShape,
    kernels: np.ndarray,
    cfg: CrossbarConfig,
    parallel_window: bool = False,
) -> KernelImage:
    """Program the column-sliced kernels: one column per output channel, two
    when a lookahead pack enables dual-window evaluation."""
    kernels = np.asarray(kernels, dtype=np.uint8)
    if kernels.shape != (shape.out_channels, shape.in_channels, shape.kernel, shape.kernel):
        raise ValueError(f"kernel tensor shape {kernels.shape} does not match layer")
    k, pack = shape.kernel, shape.pack_bits
    slots = 2 if parallel_window else 1
    rows_used = pack * (k + (1 if parallel_window else 0))
    cols_used = shape.out_channels * slots
    if rows_used > cfg.rows or cols_used > cfg.cols:
        arrays = max(-(-rows_used // cfg.rows), -(-cols_used // cfg.cols))
        raise CapacityError(
            f"layer needs {rows_used}x{cols_used} cells on a {cfg.rows}x{cfg.cols} array",
            {"rows_needed": rows_used, "cols_needed": cols_used, "arrays_needed": arrays},
        )

    # kernel column c, channel-major: [ch0 rows, ch1 rows, ...]
    col_packs = [kernels[:, :, :, c].reshape(shape.out_channels, pack) for c in range(k)]
    sliced = np.concatenate(col_packs, axis=1)  # (j, k*pack)

    columns = np.zeros((rows_used, cols_used), dtype=np.uint8)
    active = np.zeros((rows_used, cols_used), dtype=bool)
    owners = []
    for j in range(shape.out_channels):
        base = j * slots
        columns[: k * pack, base] = sliced[j]
        active[: k * pack, base] = True
        owners.append((j, 0))
        if parallel_window:
            columns[pack : (k + 1) * pack, base + 1] = sliced[j]
            active[pack : (k + 1) * pack, base + 1] = True
            owners.append((j, 1))
    return KernelImage(columns, active, tuple(owners), rows_used)


class ConvWindowBuffer:
    """Ring of column packs mirroring the crossbar input buffer."""

    def __init__(self, shape: ConvShape, parallel_window: bool = False, bit_width: int = 1):
        self.shape = shape
        self.parallel_window = parallel_window
        self.bit_width = bit_width
        self.slots = shape.kernel + (1 if parallel_window else 0)
        self.head = 0
        self._packs = [None] * self.slots
        self._next_col = 0  # input column the next streamed pack comes from
        self._window_row = None

    @property
    def capacity(self) -> int:
        return self.shape.pack_bits * self.slots

    def _pack_at(self, image: np.ndarray, col: int) -> np.ndarray:
        r = self._window_row
        k = self.shape.kernel
        return image[:, r : r + k, col].reshape(-1)

    def wrap_down(self, image: np.ndarray, window_row: int, log: TransactionLog) -> None:
        """Full refresh at the left edge of a new window row."""
        if window_row >= self.shape.input_h - self.shape.kernel + 1:
            raise ValueError("wrap below the last window row: layer complete")
        self._window_row = window_row
        self.head = 0
        for i in range(self.slots):
            self._packs[i] = self._pack_at(image, i)
        self._next_col = self.slots
        log.stream(self.capacity, self.bit_width)
        log.wraps += 1

    def slide_right(self, image: np.ndarray, log: TransactionLog, packs: int | None = None) -> None:
        """Advance the window: stream in the new right-most pack(s), dropping
        the same number of stale left-most ones."""
        n = self.shape.stride if packs is None else packs
        if self._next_col + n > self.shape.input_w:
            raise ValueError("slide past the right edge: wrap_down required")
        for _ in range(n):
            self._packs[self.head] = self._pack_at(image, self._next_col)
            self.head = (self.head + 1) % self.slots
            self._next_col += 1
        log.stream(n * self.shape.pack_bits, self.bit_width)
        log.slides += 1

    def window_bits(self, slot: int = 0) -> np.ndarray:
        """Current operating window (slot 0) or the lookahead window (slot 1),
        flattened in column-pack order to face the programmed kernel column."""
        if slot and not self.parallel_window:
            raise ValueError("no lookahead window without parallel_window")
        k = self.shape.kernel
        out = [self._packs[(self.head + slot + i) % self.slots] for i in range(k)]
        if any(p is None for p in out):
            raise ValueError("buffer not filled; call wrap_down first")
        return np.concatenate(out)


def run_layer(
    input_bits: np.ndarray,
    kernels: np.ndarray,
    cfg: CrossbarConfig | None = None,
    parallel_window: bool = False,
    bit_width: int = 1,
    bus_width_bits: int = 32,
    stride: int = 1,
) -> tuple[np.ndarray, TransactionLog]:
    """Drive one conv layer through the buffer/crossbar mapping.

    Returns the signed XNOR-dot value per (output channel, window) and the
    transaction log of the traversal. Windows are evaluated two at a time
    when parallel_window is set, except for a dangling last window in a row.
    """
    input_bits = np.asarray(input_bits, dtype=np.uint8)
    ch, h, w = input_bits.shape
    shape = ConvShape(ch, np.asarray(kernels).shape[0], h, w, np.asarray(kernels).shape[2], stride)
    parallel_window = parallel_window and shape.out_w >= 2
    image = layout_kernels(shape, kernels, cfg or CrossbarConfig(), parallel_window)
    buf = ConvWindowBuffer(shape, parallel_window, bit_width)
    log = TransactionLog(bus_width_bits)

    n = shape.window_bits
    kcols = np.stack(
        [image.columns[image.active[:, c], c] for c in range(image.columns.shape[1])]
    )  # every column exposes exactly the k*pack live kernel cells
    slot_of = {owner: c for c, owner in enumerate(image.column_owner)}

    dots = np.zeros((shape.out_channels, shape.out_h, shape.out_w), dtype=np.int32)
    for row in range(shape.out_h):
        buf.wrap_down(input_bits, row * shape.stride, log)
        left = 0  # window position the buffer's head pack belongs to
        col = 0
        while col < shape.out_w:
            dual = parallel_window and col + 1 < shape.out_w
            # A dangling last window evaluates through the shifted column
            # (slot 1), so the final slide skips the lookahead pack.
            base = 1 if (parallel_window and not dual) else 0
            target = col - base
            if target > left:
                buf.slide_right(input_bits, log, packs=(target - left) * shape.stride)
                left = target
            for slot in (base, base + 1) if dual else (base,):
                win = buf.window_bits(slot)
                for j in range(shape.out_channels):
                    matches = int((win == kcols[slot_of[(j, slot)]]).sum())
                    dots[j, row, col + slot - base] = 2 * matches - n
            col += 2 if dual else 1
    return dots, log


def streamed_bits_per_row(shape: ConvShape, parallel_window: bool = False) -> int:
    """Closed form for one window row: a full refresh plus one pack (stride
    packs) per remaining slide."""
    pack = shape.pack_bits
    refresh = pack * (shape.kernel + (1 if parallel_window else 0))
    if parallel_window:
        evals = -(-shape.out_w // 2)
        return refresh + (evals - 1) * 2 * pack - (pack if shape.out_w % 2 else 0)
    return refresh + (shape.out_w - 1) * shape.stride * pack


def streamed_words_per_layer(
    shape: ConvShape,
    bit_width: int = 1,
    bus_width_bits: int = 32,
    parallel_window: bool = False,
) -> int:
    """Bus words for a full layer traversal, with per-event word rounding."""
    word = lambda bits: -(-bits * bit_width // bus_width_bits)
    pack = shape.pack_bits
    refresh = word(pack * (shape.kernel + (1 if parallel_window else 0)))
    if parallel_window:
        evals = -(-shape.out_w // 2)
        full_slides = evals - 1 - (1 if shape.out_w % 2 else 0)
        per_row = refresh + full_slides * word(2 * pack) + (word(pack) if shape.out_w % 2 else 0)
    else:
        per_row = refresh + (shape.out_w - 1) * word(shape.stride * pack)
    return shape.out_h * per_row


def pipeline_schedule(layers: list[ConvShape], parallel_window: bool = False) -> list[int]:
    """Start offsets, in window-evaluation steps, for a chain of conv layers.

    A layer may start once its kernel height in full output rows of the
    previous layer exists.
    """
    if not layers:
        raise ValueError("empty layer list")
    for a, b in zip(layers, layers[1:]):
        if a.out_channels != b.in_channels:
            raise ValueError(f"channel mismatch between layers: {a.out_channels} -> {b.in_channels}")
        if (a.out_h, a.out_w) != (b.input_h, b.input_w):
            raise ValueError("layer input size does not match previous output")
    offsets = [0]
    for prev, nxt in zip(layers, layers[1:]):
        evals_per_row = -(-prev.out_w // 2) if parallel_window else prev.out_w
        offsets.append(offsets[-1] + nxt.kernel * evals_per_row)
    return offsets
