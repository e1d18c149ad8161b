"""Network topology descriptions, weight/dataset containers, and the
end-to-end inference runner that compares the crossbar execution against the
exact software model.

Topology grammar ("-" separated tokens):
    "5x5,6"     conv, 5x5 kernel, 6 output channels
    "2x2 Pool"  max pool (binary max = OR over the window)
    "FC(120)"   fully connected layer with 120 outputs
A leading FC token declares the input width instead of a weight layer (the
MLP rows list the 784-pixel input that way); everywhere else FC(n) is a
weight layer whose fan-in is inferred from the previous layer.
"""

from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import cascade as _cascade
from .crossbar import CrossbarConfig, ReferenceSet

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

_WEIGHT_MAGIC = b"XBW1"
_WEIGHT_VERSION = 1


@dataclass(frozen=True)
class ConvLayer:
    kernel: int
    out_channels: int
    in_channels: int
    input_h: int
    input_w: int
    binarized: bool = True

    @property
    def out_h(self) -> int:
        return self.input_h - self.kernel + 1

    @property
    def out_w(self) -> int:
        return self.input_w - self.kernel + 1

    @property
    def fan_in(self) -> int:
        return self.in_channels * self.kernel * self.kernel

    @property
    def weight_shape(self) -> tuple:
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)


@dataclass(frozen=True)
class PoolLayer:
    size: int
    channels: int
    input_h: int
    input_w: int

    @property
    def out_h(self) -> int:
        return self.input_h // self.size

    @property
    def out_w(self) -> int:
        return self.input_w // self.size


@dataclass(frozen=True)
class FCLayer:
    in_features: int
    out_features: int
    binarized: bool = True

    @property
    def fan_in(self) -> int:
        return self.in_features

    @property
    def weight_shape(self) -> tuple:
        return (self.out_features, self.in_features)


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_channels: int
    input_h: int
    input_w: int
    layers: tuple = ()

    @property
    def weight_layers(self) -> tuple:
        return tuple(l for l in self.layers if not isinstance(l, PoolLayer))

    @property
    def output_classes(self) -> int:
        last = self.weight_layers[-1]
        return last.out_features if isinstance(last, FCLayer) else last.out_channels


class TopologyError(ValueError):
    pass


_CONV_RE = re.compile(r"^(\d+)x(\d+),(\d+)$")
_POOL_RE = re.compile(r"^(\d+)x(\d+)\s*Pool$", re.IGNORECASE)
_FC_RE = re.compile(r"^FC\((\d+)\)$", re.IGNORECASE)


def parse_topology(
    text: str,
    input_channels: int = 1,
    input_h: int = 28,
    input_w: int = 28,
    name: str | None = None,
) -> NetworkSpec:
    """Parse a topology line into a validated NetworkSpec.

    The first weight layer is non-binarized (it consumes raw pixel values);
    everything after it runs on binary weights and activations.
    """
    tokens = [t.strip() for t in text.split("-")]
    if not tokens or not any(tokens):
        raise TopologyError("empty topology")

    layers = []
    ch, h, w = input_channels, input_h, input_w
    flat = None  # feature width once the net switches to FC layers
    first_weight = True
    for pos, tok in enumerate(tokens):
        if m := _CONV_RE.match(tok):
            k1, k2, out_ch = (int(g) for g in m.groups())
            if k1 != k2:
                raise TopologyError(f"token {pos} {tok!r}: only square kernels supported")
            if flat is not None:
                raise TopologyError(f"token {pos} {tok!r}: conv after FC")
            if out_ch < 1 or k1 < 1:
                raise TopologyError(f"token {pos} {tok!r}: degenerate conv")
            if k1 > h or k1 > w:
                raise TopologyError(f"token {pos} {tok!r}: kernel exceeds {h}x{w} input")
            layers.append(ConvLayer(k1, out_ch, ch, h, w, binarized=not first_weight))
            first_weight = False
            ch, h, w = out_ch, layers[-1].out_h, layers[-1].out_w
        elif m := _POOL_RE.match(tok):
            s1, s2 = (int(g) for g in m.groups())
            if s1 != s2:
                raise TopologyError(f"token {pos} {tok!r}: only square pooling supported")
            if flat is not None:
                raise TopologyError(f"token {pos} {tok!r}: pool after FC")
            layers.append(PoolLayer(s1, ch, h, w))
            h, w = layers[-1].out_h, layers[-1].out_w
        elif m := _FC_RE.match(tok):
            n = int(m.group(1))
            if n < 1:
                raise TopologyError(f"token {pos} {tok!r}: FC needs a positive width")
            if pos == 0:
                flat = n  # input-width declaration, not a weight layer
                continue
            if flat is None:
                flat = ch * h * w
            layers.append(FCLayer(flat, n, binarized=not first_weight))
            first_weight = False
            flat = n
        else:
            raise TopologyError(f"token {pos} {tok!r}: unrecognized layer")
    if not layers:
        raise TopologyError("topology has no weight layers")
    return NetworkSpec(name or text, input_channels, input_h, input_w, tuple(layers))


# Table 1 topologies, reachable by name from the CLI.
TOPOLOGIES = {
    "lenet-5": "5x5,6 - 2x2 Pool - 5x5,16 - 2x2 Pool - FC(120) - FC(84) - FC(10)",
    "cnn-1": "5x5,5 - 2x2 Pool - FC(720) - FC(70) - FC(10)",
    "cnn-2": "7x7,10 - 2x2 Pool - FC(1210) - FC(1210) - FC(10)",
    "mlp-s": "FC(784) - FC(500) - FC(250) - FC(10)",
    "mlp-m": "FC(784) - FC(1000) - FC(500) - FC(250) - FC(10)",
    "mlp-l": "FC(784) - FC(1500) - FC(1000) - FC(500) - FC(10)",
}


def named_network(name: str) -> NetworkSpec:
    key = name.lower()
    if key not in TOPOLOGIES:
        raise TopologyError(f"unknown network {name!r}; known: {', '.join(sorted(TOPOLOGIES))}")
    return parse_topology(TOPOLOGIES[key], name=key)


class WeightFormatError(ValueError):
    pass


@dataclass
class WeightContainer:
    """Per-layer weights: uint8 bit matrices for binarized layers, int8 for
    the quantized non-binarized ones. Serialized with a CRC32 trailer."""

    arrays: list = field(default_factory=list)

    @classmethod
    def random(cls, net: NetworkSpec, seed: int) -> "WeightContainer":
        rng = np.random.default_rng(seed)
        arrays = []
        for layer in net.weight_layers:
            shape = layer.weight_shape
            if layer.binarized:
                arrays.append(rng.integers(0, 2, size=shape, dtype=np.uint8))
            else:
                arrays.append(rng.integers(-127, 128, size=shape, dtype=np.int8))
        return cls(arrays)

    def validate(self, net: NetworkSpec) -> None:
        layers = net.weight_layers
        if len(self.arrays) != len(layers):
            raise WeightFormatError(f"{len(self.arrays)} weight arrays for {len(layers)} layers")
        for i, (arr, layer) in enumerate(zip(self.arrays, layers)):
            if tuple(arr.shape) != layer.weight_shape:
                raise WeightFormatError(
                    f"layer {i}: weight shape {tuple(arr.shape)} != expected {layer.weight_shape}"
                )
            want = np.uint8 if layer.binarized else np.int8
            if arr.dtype != want:
                raise WeightFormatError(f"layer {i}: dtype {arr.dtype} != {want}")

    def save(self, path) -> None:
        out = bytearray()
        out += _WEIGHT_MAGIC
        out += struct.pack("<HH", _WEIGHT_VERSION, len(self.arrays))
        for arr in self.arrays:
            binary = arr.dtype == np.uint8
            dims = arr.shape
            out += struct.pack("<BB", 1 if binary else 0, len(dims))
            out += struct.pack(f"<{len(dims)}I", *dims)
            payload = np.packbits(arr.ravel(), bitorder="little").tobytes() if binary else arr.tobytes()
            out += struct.pack("<I", len(payload))
            out += payload
        out += struct.pack("<I", zlib.crc32(bytes(out)))
        with open(path, "wb") as f:
            f.write(bytes(out))

    @classmethod
    def load(cls, path) -> "WeightContainer":
        with open(path, "rb") as f:
            blob = f.read()
        if len(blob) < 12 or blob[:4] != _WEIGHT_MAGIC:
            raise WeightFormatError(f"bad magic {blob[:4]!r}")
        body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
        if zlib.crc32(body) != crc:
            raise WeightFormatError("checksum mismatch")
        version, count = struct.unpack_from("<HH", blob, 4)
        if version != _WEIGHT_VERSION:
            raise WeightFormatError(f"unsupported version {version}")
        off = 8
        arrays = []
        for i in range(count):
            binary, ndim = struct.unpack_from("<BB", body, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}I", body, off)
            off += 4 * ndim
            (plen,) = struct.unpack_from("<I", body, off)
            off += 4
            payload = body[off : off + plen]
            if len(payload) != plen:
                raise WeightFormatError(f"layer {i}: truncated payload at byte {off}")
            off += plen
            n = int(np.prod(dims))
            if binary:
                arr = np.unpackbits(np.frombuffer(payload, np.uint8), count=n, bitorder="little")
                arrays.append(arr.reshape(dims).astype(np.uint8))
            else:
                arrays.append(np.frombuffer(payload, np.int8).reshape(dims).copy())
        return cls(arrays)


class IdxFormatError(ValueError):
    pass


def _read_idx_header(blob: bytes, path, magic: int, ndim: int) -> tuple:
    if len(blob) < 4 * (1 + ndim):
        raise IdxFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    got = struct.unpack_from(">I", blob, 0)[0]
    if got != magic:
        raise IdxFormatError(f"{path}: magic 0x{got:08x} at byte 0, expected 0x{magic:08x}")
    return struct.unpack_from(f">{ndim}I", blob, 4)


def load_idx_images(path) -> np.ndarray:
    """MNIST-layout image file: big-endian header, then unsigned-byte pixels."""
    with open(path, "rb") as f:
        blob = f.read()
    count, rows, cols = _read_idx_header(blob, path, IDX_IMAGE_MAGIC, 3)
    need = 16 + count * rows * cols
    if len(blob) < need:
        raise IdxFormatError(f"{path}: payload ends at byte {len(blob)}, expected {need}")
    data = np.frombuffer(blob, np.uint8, count=count * rows * cols, offset=16)
    return data.reshape(count, rows, cols).copy()


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    (count,) = _read_idx_header(blob, path, IDX_LABEL_MAGIC, 1)
    need = 8 + count
    if len(blob) < need:
        raise IdxFormatError(f"{path}: payload ends at byte {len(blob)}, expected {need}")
    labels = np.frombuffer(blob, np.uint8, count=count, offset=8).copy()
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"{path}: label {labels.max()} outside [0, 9]")
    return labels


@dataclass(frozen=True)
class DatasetSource:
    images_path: str
    labels_path: str

    def load(self) -> tuple[np.ndarray, np.ndarray]:
        images = load_idx_images(self.images_path)
        labels = load_idx_labels(self.labels_path)
        if images.shape[0] != labels.shape[0]:
            raise IdxFormatError(
                f"{images.shape[0]} images vs {labels.shape[0]} labels: files do not pair"
            )
        return images, labels


@dataclass(frozen=True)
class CrossbarBackend:
    """Routes every binarized layer through split columns + SA + cascade."""

    config: CrossbarConfig
    refs: ReferenceSet
    policy_kind: str = "F2"

    def policy(self) -> _cascade.CascadePolicy:
        return _cascade.CascadePolicy(self.policy_kind, self.refs)


@dataclass(frozen=True)
class InferenceReport:
    backend: str
    samples: int
    accuracy: float
    golden_accuracy: float
    layer_mismatch: tuple  # (layer label, mismatch fraction) per activation layer

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "samples": self.samples,
            "accuracy": self.accuracy,
            "golden_accuracy": self.golden_accuracy,
            "layer_mismatch": [{"layer": n, "mismatch": m} for n, m in self.layer_mismatch],
        }


def _signed_matmul(a_bits: np.ndarray, w_bits: np.ndarray) -> np.ndarray:
    """Exact signed dot products of bit matrices via float64 BLAS; values are
    integers far below 2^53 so the rounding is lossless."""
    a = a_bits.astype(np.float64) * 2.0 - 1.0
    w = w_bits.astype(np.float64) * 2.0 - 1.0
    return np.rint(a @ w.T).astype(np.int64)


def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    """(B, C, H, W) -> (B, windows, C*k*k), valid windows in row-major order."""
    b, c, h, w = x.shape
    oh, ow = h - kernel + 1, w - kernel + 1
    view = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    # view: (B, C, oh, ow, k, k) -> (B, oh*ow, C*k*k)
    return view.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kernel * kernel)


def _fc_bits_golden(a_bits: np.ndarray, w_bits: np.ndarray, tie_high: bool) -> np.ndarray:
    dot = _signed_matmul(a_bits, w_bits)
    return (dot >= 0 if tie_high else dot > 0).astype(np.uint8)


def _fc_bits_crossbar(a_bits: np.ndarray, w_bits: np.ndarray, backend: CrossbarBackend) -> np.ndarray:
    """Binary FC through the crossbar model, vectorized over rows/outputs."""
    n = a_bits.shape[1]
    rows = backend.config.rows
    splits = -(-n // rows)
    lengths = [min(rows, n - s * rows) for s in range(splits)]
    refsets = [backend.refs.for_segment(m) for m in lengths]
    counts = []
    for s, m in enumerate(lengths):
        sl = slice(s * rows, s * rows + m)
        dot = _signed_matmul(a_bits[:, sl], w_bits[:, sl])
        counts.append((m + dot) // 2)  # popcount of the segment XNOR
    if splits == 1:
        mid = (backend.refs.count - 1) // 2
        levels = np.asarray(refsets[0].levels())
        t = (counts[0][..., None] > levels).sum(axis=-1)
        return (t > mid).astype(np.uint8)
    flat = [c.reshape(-1) for c in counts]
    intervals = np.stack(
        [(f[:, None] > np.asarray(r.levels())[None, :]).sum(axis=1) for f, r in zip(flat, refsets)],
        axis=1,
    )
    out = _cascade.decide_batch(backend.policy_kind, intervals, lengths, refsets, n)
    return out.reshape(counts[0].shape).astype(np.uint8)


def _first_layer_int(x, layer, weights) -> np.ndarray:
    """Quantized non-binarized layer: integer dot, then sign to bits."""
    if isinstance(layer, FCLayer):
        # u8 pixels x i8 weights: magnitudes stay far below 2^53, so the
        # float64 BLAS product is exact
        sums = np.rint(x.astype(np.float64) @ weights.astype(np.float64).T)
        return (sums >= 0).astype(np.uint8)
    cols = _im2col(x, layer.kernel)  # (B, win, fan)
    wmat = weights.reshape(layer.out_channels, -1)
    sums = cols.astype(np.float64) @ wmat.astype(np.float64).T
    bits = np.rint(sums) >= 0
    b = x.shape[0]
    return (
        bits.reshape(b, layer.out_h, layer.out_w, layer.out_channels)
        .transpose(0, 3, 1, 2)
        .astype(np.uint8)
    )


def _pool_or(x: np.ndarray, size: int) -> np.ndarray:
    b, c, h, w = x.shape
    v = x[:, :, : h - h % size, : w - w % size]
    v = v.reshape(b, c, h // size, size, w // size, size)
    return v.max(axis=(3, 5))


def _forward(net, weights, images, mode, backend, tie_high):
    """Run the whole net; returns (scores, list of activation bit tensors)."""
    first = True
    acts = []
    x = images.astype(np.int64)
    if isinstance(net.layers[0], FCLayer):
        x = x.reshape(x.shape[0], -1)
    wi = 0
    wl = net.weight_layers
    for layer in net.layers:
        if isinstance(layer, PoolLayer):
            x = _pool_or(x, layer.size)
            continue
        w = weights.arrays[wi]
        last = wi == len(wl) - 1
        if first and not layer.binarized:
            x = _first_layer_int(x, layer, w)
            acts.append(x)
        elif isinstance(layer, FCLayer):
            if x.ndim > 2:
                x = x.reshape(x.shape[0], -1)
            if last:
                x = _signed_matmul(x, w)  # raw class scores, no thresholding
            elif mode == "golden":
                x = _fc_bits_golden(x, w, tie_high)
                acts.append(x)
            else:
                x = _fc_bits_crossbar(x, w, backend)
                acts.append(x)
        else:  # binarized conv
            b = x.shape[0]
            cols = _im2col(x, layer.kernel).reshape(b * layer.out_h * layer.out_w, layer.fan_in)
            wmat = w.reshape(layer.out_channels, -1)
            if mode == "golden":
                bits = _fc_bits_golden(cols, wmat, tie_high)
            else:
                bits = _fc_bits_crossbar(cols, wmat, backend)
            x = (
                bits.reshape(b, layer.out_h, layer.out_w, layer.out_channels)
                .transpose(0, 3, 1, 2)
                .astype(np.uint8)
            )
            acts.append(x)
        first = False
        wi += 1
    return x, acts


def run_inference(
    net: NetworkSpec,
    weights: WeightContainer,
    images: np.ndarray,
    labels: np.ndarray,
    backend: CrossbarBackend | str = "golden",
    tie_high: bool = False,
) -> InferenceReport:
    """Classify a batch and report accuracy plus, for the crossbar backend,
    the per-layer fraction of activation bits that differ from the exact
    software chain (both chains run independently end to end)."""
    weights.validate(net)
    if images.ndim == 3:
        images = images[:, None, :, :]
    golden_scores, golden_acts = _forward(net, weights, images, "golden", None, tie_high)
    golden_acc = float((golden_scores.argmax(axis=1) == labels).mean())
    if backend == "golden":
        return InferenceReport("golden", len(labels), golden_acc, golden_acc, ())

    scores, acts = _forward(net, weights, images, "crossbar", backend, tie_high)
    acc = float((scores.argmax(axis=1) == labels).mean())
    labels_mismatch = []
    names = [type(l).__name__ for l in net.weight_layers[:-1]]
    for i, (g, c) in enumerate(zip(golden_acts, acts)):
        labels_mismatch.append((f"{i}:{names[i]}", float((g != c).mean())))
    return InferenceReport(
        f"crossbar/{backend.policy_kind}", len(labels), acc, golden_acc, tuple(labels_mismatch)
    )
