"""Convolutional auto-encoder: depth variants, training, inference, weight files.

Encoder stages are 3x3 conv + ReLU + 2x2 ceil-mode max pooling. Decoder
stages are nearest-neighbour upsampling back to the matching encoder size
followed by 3x3 conv + ReLU. A final 3x3 conv to one channel with a sigmoid
produces the reconstruction.

Depth classes count convolutional layers::

    depth 5: 28 -> 14 -> 7          enc (64, 32)          dec (64, 64)
    depth 7: 28 -> 14 -> 7 -> 4     enc (64, 64, 32)      dec (64, 64, 64)
    depth 9: 28 -> 14 -> 7 -> 4 -> 2  enc (64, 64, 32, 32)  dec (32, 64, 64, 64)
"""
from __future__ import annotations

import csv
import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn

log = logging.getLogger(__name__)

_STAGE_TABLE = {
    5: ((64, 32), (64, 64)),
    7: ((64, 64, 32), (64, 64, 64)),
    9: ((64, 64, 32, 32), (32, 64, 64, 64)),
}


@dataclass(frozen=True)
class CaeArchitecture:
    """Stage table of one auto-encoder variant.

    ``encoder`` lists conv output channels (every encoder conv is followed
    by pooling); ``decoder`` lists ``(target_size, channels)`` pairs.
    """

    depth_class: int
    encoder: tuple
    decoder: tuple
    input_size: int = 28

    def __post_init__(self):
        object.__setattr__(self, "encoder", tuple(int(c) for c in self.encoder))
        object.__setattr__(self, "decoder", tuple((int(t), int(c)) for t, c in self.decoder))
        if len(self.encoder) != len(self.decoder):
            raise ValueError(f"{len(self.encoder)} encoder stages but {len(self.decoder)} decoder stages")
        if len(self.encoder) + len(self.decoder) + 1 != self.depth_class:
            raise ValueError(
                f"depth_class {self.depth_class} != {len(self.encoder)} encoder + "
                f"{len(self.decoder)} decoder + 1 final conv layers"
            )
        targets = [t for t, _ in self.decoder]
        if targets != list(reversed(self.encoder_sizes()[:-1])):
            raise ValueError(f"decoder targets {targets} do not mirror encoder sizes {self.encoder_sizes()}")

    def encoder_sizes(self) -> list[int]:
        """Spatial size entering each encoder stage, plus the bottleneck size."""
        sizes = [self.input_size]
        for _ in self.encoder:
            sizes.append(-(-sizes[-1] // 2))
        return sizes

    def layer_shapes(self) -> list[tuple[str, int, int]]:
        """(name, out_channels, in_channels) for every conv, in declaration order."""
        shapes, c = [], 1
        for i, o in enumerate(self.encoder):
            shapes.append((f"enc{i}", o, c))
            c = o
        for i, (_, o) in enumerate(self.decoder):
            shapes.append((f"dec{i}", o, c))
            c = o
        shapes.append(("final", 1, c))
        return shapes

    def n_params(self) -> int:
        return sum(o * i * 9 + o for _, o, i in self.layer_shapes())

    def shape_trace(self) -> list[tuple[str, tuple[int, int, int]]]:
        """(stage, (height, width, channels)) after every stage."""
        trace = [("input", (self.input_size, self.input_size, 1))]
        sizes = self.encoder_sizes()
        for i, c in enumerate(self.encoder):
            trace.append((f"enc{i}.conv", (sizes[i], sizes[i], c)))
            trace.append((f"enc{i}.pool", (sizes[i + 1], sizes[i + 1], c)))
        for i, (t, c) in enumerate(self.decoder):
            prev = trace[-1][1][2]
            trace.append((f"dec{i}.upsample", (t, t, prev)))
            trace.append((f"dec{i}.conv", (t, t, c)))
        trace.append(("final", (self.input_size, self.input_size, 1)))
        return trace

    def to_dict(self) -> dict:
        return {
            "depth_class": self.depth_class,
            "input_size": self.input_size,
            "encoder": list(self.encoder),
            "decoder": [list(d) for d in self.decoder],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaeArchitecture":
        return cls(d["depth_class"], tuple(d["encoder"]), tuple(tuple(x) for x in d["decoder"]),
                   d.get("input_size", 28))


def build_architecture(depth_class: int, input_size: int = 28) -> CaeArchitecture:
    if depth_class not in _STAGE_TABLE:
        raise ValueError(f"unsupported depth class {depth_class}; choose one of {sorted(_STAGE_TABLE)}")
    enc, dec_ch = _STAGE_TABLE[depth_class]
    sizes = [input_size]
    for _ in enc:
        sizes.append(-(-sizes[-1] // 2))
    targets = list(reversed(sizes[:-1]))
    return CaeArchitecture(depth_class, enc, tuple(zip(targets, dec_ch)), input_size)


@dataclass
class CaeWeights:
    arch: CaeArchitecture
    layers: list

    def __post_init__(self):
        shapes = self.arch.layer_shapes()
        if len(shapes) != len(self.layers):
            raise WeightShapeError(f"architecture has {len(shapes)} conv layers, got {len(self.layers)}")
        for (name, o, i), layer in zip(shapes, self.layers):
            if layer.kernels.shape != (o, i, 3, 3):
                raise WeightShapeError(f"{name}: kernels {layer.kernels.shape} != {(o, i, 3, 3)}")

    def named_params(self) -> dict:
        """Name -> array views onto the live parameters (kernels then bias, in order)."""
        out = {}
        for (name, _, _), layer in zip(self.arch.layer_shapes(), self.layers):
            out[f"{name}.kernels"] = layer.kernels
            out[f"{name}.bias"] = layer.bias
        return out

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def copy(self) -> "CaeWeights":
        return CaeWeights(self.arch, [nn.ConvLayer(l.kernels.copy(), l.bias.copy()) for l in self.layers])

    def astype(self, dtype) -> "CaeWeights":
        return CaeWeights(self.arch, [l.astype(dtype) for l in self.layers])


def init_weights(arch: CaeArchitecture, seed: int, dtype=np.float32) -> CaeWeights:
    """He-normal kernels (std sqrt(2 / fan_in), fan_in = 9 * in_ch), zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for _, o, i in arch.layer_shapes():
        k = rng.standard_normal((o, i, 3, 3)) * math.sqrt(2.0 / (9 * i))
        layers.append(nn.ConvLayer(k.astype(dtype), np.zeros(o, dtype=dtype)))
    return CaeWeights(arch, layers)


# -- forward / backward ------------------------------------------------------

def _as_batch(frames: np.ndarray, size: int, dtype) -> tuple[np.ndarray, bool]:
    x = np.asarray(frames)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim == 4 and x.shape[3] == 1:
        x = x[..., 0]
    if x.ndim != 3 or x.shape[1:] != (size, size):
        raise nn.ShapeError(f"expected {size}x{size} frame(s), got array of shape {np.shape(frames)}")
    return np.ascontiguousarray(x[..., None], dtype=dtype), single


def _forward(weights: CaeWeights, x: np.ndarray, keep: bool):
    arch = weights.arch
    layers = iter(weights.layers)
    tape = []
    h = x
    for _ in arch.encoder:
        layer = next(layers)
        if keep:
            z, cc = nn.conv2d_forward(h, layer)
        else:
            z, cc = nn.conv2d_same(h, layer), None
        a = nn.relu(z)
        pooled, idx = nn.maxpool_2x2_ceil(a)
        tape.append((cc, a, idx))
        h = pooled
    for target, _ in arch.decoder:
        layer = next(layers)
        in_shape = h.shape
        u = nn.upsample_nearest_to(h, target, target)
        if keep:
            z, cc = nn.conv2d_forward(u, layer)
        else:
            z, cc = nn.conv2d_same(u, layer), None
        a = nn.relu(z)
        tape.append((cc, a, in_shape))
        h = a
    layer = next(layers)
    if keep:
        z, cc = nn.conv2d_forward(h, layer)
    else:
        z, cc = nn.conv2d_same(h, layer), None
    y = nn.sigmoid(z)
    tape.append((cc, y))
    return y, tape


def _backward(weights: CaeWeights, tape, grad_y: np.ndarray) -> dict:
    arch = weights.arch
    names = [n for n, _, _ in arch.layer_shapes()]
    grads = {}
    n_enc = len(arch.encoder)

    cc, y = tape[-1]
    g = nn.sigmoid_backward(grad_y, y)
    g, gk, gb = nn.conv2d_backward(g, cc, weights.layers[-1])
    grads["final"] = (gk, gb)

    for j in reversed(range(len(arch.decoder))):
        cc, a, in_shape = tape[n_enc + j]
        layer = weights.layers[n_enc + j]
        g = nn.relu_backward(g, a)
        g, gk, gb = nn.conv2d_backward(g, cc, layer)
        grads[names[n_enc + j]] = (gk, gb)
        g = nn.upsample_backward(g, in_shape)

    for i in reversed(range(n_enc)):
        cc, a, idx = tape[i]
        g = nn.maxpool_backward(g, idx, a.shape)
        g = nn.relu_backward(g, a)
        g, gk, gb = nn.conv2d_backward(g, cc, weights.layers[i], need_input_grad=i > 0)
        grads[names[i]] = (gk, gb)

    out = {}
    for name in names:
        gk, gb = grads[name]
        out[f"{name}.kernels"] = gk
        out[f"{name}.bias"] = gb
    return out


def loss_and_grads(weights: CaeWeights, frames: np.ndarray, truths: np.ndarray,
                   weight_decay: float = 0.0) -> tuple[float, float, dict]:
    """Batch objective ``mse + weight_decay * sum(kernels**2)`` and its gradient.

    Returns ``(mse, objective, grads)``.
    """
    dtype = weights.layers[0].kernels.dtype
    x, _ = _as_batch(frames, weights.arch.input_size, dtype)
    t, _ = _as_batch(truths, weights.arch.input_size, dtype)
    y, tape = _forward(weights, x, keep=True)
    mse, gy = nn.mse_loss(y, t)
    grads = _backward(weights, tape, gy.astype(dtype, copy=False))
    objective = mse
    if weight_decay:
        for name, p in weights.named_params().items():
            if name.endswith(".kernels"):
                objective += weight_decay * float(np.sum(p.astype(np.float64) ** 2))
                grads[name] = grads[name] + (2 * weight_decay) * p
    return mse, objective, grads


def forward(weights: CaeWeights, frames: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Reconstruct one frame (H, W) or a stack (N, H, W); outputs lie in (0, 1)."""
    dtype = weights.layers[0].kernels.dtype
    x, single = _as_batch(frames, weights.arch.input_size, dtype)
    outs = [_forward(weights, x[s:s + batch_size], keep=False)[0][..., 0]
            for s in range(0, len(x), batch_size)]
    y = np.concatenate(outs) if outs else np.zeros((0,) + x.shape[1:3], dtype=dtype)
    return y[0] if single else y


# -- training ----------------------------------------------------------------

class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 64
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    shuffle_seed: int | None = None
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    test_mse: float
    seconds: float


@dataclass
class TrainingHistory:
    records: list = field(default_factory=list)

    def train_curve(self) -> np.ndarray:
        return np.array([r.train_mse for r in self.records])

    def test_curve(self) -> np.ndarray:
        return np.array([r.test_mse for r in self.records])

    def same_trajectory(self, other: "TrainingHistory") -> bool:
        """Equality ignoring wall-clock time."""
        key = lambda h: [(r.epoch, r.train_mse, r.test_mse) for r in h.records]  # noqa: E731
        return np.array_equal(np.array(key(self), dtype=float), np.array(key(other), dtype=float),
                              equal_nan=True)

    def write_csv(self, path, include_time: bool = True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "test_mse", "seconds"] if include_time
                       else ["epoch", "train_mse", "test_mse"])
            for r in self.records:
                row = [r.epoch, repr(r.train_mse), repr(r.test_mse)]
                if include_time:
                    row.append(f"{r.seconds:.3f}")
                w.writerow(row)

    @classmethod
    def read_csv(cls, path) -> "TrainingHistory":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([EpochRecord(int(r["epoch"]), float(r["train_mse"]), float(r["test_mse"]),
                                float(r.get("seconds", "nan") or "nan")) for r in rows])


def _pairs_to_arrays(pairs):
    if hasattr(pairs, "frames") and hasattr(pairs, "truths"):
        return np.asarray(pairs.frames), np.asarray(pairs.truths)
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 3:
        return np.asarray(pairs[0]), np.asarray(pairs[1])
    frames = np.stack([np.asarray(f) for f, _ in pairs])
    truths = np.stack([np.asarray(t) for _, t in pairs])
    return frames, truths


def evaluate_mse(weights: CaeWeights, frames, truths, batch_size: int = 64) -> float:
    """Mean per-pixel squared error over a frame set."""
    y = forward(weights, frames, batch_size=batch_size).astype(np.float64)
    return float(np.mean((y - np.asarray(truths, dtype=np.float64)) ** 2))


def train(pairs, arch: CaeArchitecture, cfg: TrainConfig, seed: int, test_pairs=None,
          callback=None, init: CaeWeights | None = None) -> tuple[CaeWeights, TrainingHistory]:
    """Fit the auto-encoder to (frame, truth) pairs with Adam on mini-batches.

    ``pairs`` may be a list of (frame, truth) tuples, a ``(frames, truths)``
    array pair or any object with ``frames`` and ``truths`` arrays. The
    held-out set, when given, is scored every ``cfg.eval_every`` epochs;
    other epochs record NaN.
    """
    frames, truths = _pairs_to_arrays(pairs)
    if len(frames) == 0:
        raise ValueError("training set is empty")
    size = arch.input_size
    x, _ = _as_batch(frames, size, np.float32)
    t, _ = _as_batch(truths, size, np.float32)
    if test_pairs is not None:
        test_frames, test_truths = _pairs_to_arrays(test_pairs)

    weights = init.copy() if init is not None else init_weights(arch, seed)
    params = weights.named_params()
    state = nn.AdamState(lr=cfg.learning_rate)
    shuffle_seed = cfg.shuffle_seed if cfg.shuffle_seed is not None else seed
    rng = np.random.default_rng(np.random.SeedSequence([shuffle_seed, 0x5EED]))
    history = TrainingHistory()
    n = len(x)

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for b, s in enumerate(range(0, n, cfg.batch_size)):
            idx = order[s:s + cfg.batch_size]
            mse, objective, grads = loss_and_grads(weights, x[idx], t[idx], cfg.weight_decay)
            if not math.isfinite(objective):
                raise TrainingDivergedError(f"non-finite loss {objective} at epoch {epoch}, batch {b}")
            if cfg.learning_rate > 0:
                nn.adam_step(params, grads, state)
            total += mse * len(idx)
        test_mse = float("nan")
        if test_pairs is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            test_mse = evaluate_mse(weights, test_frames, test_truths)
        rec = EpochRecord(epoch, total / n, test_mse, time.perf_counter() - t0)
        history.records.append(rec)
        log.info("epoch %d train_mse %.6f test_mse %.6f (%.1fs)", epoch, rec.train_mse, rec.test_mse, rec.seconds)
        if callback is not None:
            callback(rec)
    return weights, history


# -- weight files ------------------------------------------------------------

MAGIC = b"CAEW"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sII")


class WeightFileError(ValueError):
    pass


class WeightFormatError(WeightFileError):
    """Bad magic, unreadable header or trailing bytes."""


class WeightVersionError(WeightFileError):
    pass


class TruncatedWeightsError(WeightFileError):
    pass


class WeightShapeError(WeightFileError):
    pass


def _header_bytes(weights: CaeWeights) -> bytes:
    header = dict(weights.arch.to_dict())
    header["dtype"] = "float32-le"
    header["layers"] = [
        {"name": name, "kernels": [o, i, 3, 3], "bias": [o]} for name, o, i in weights.arch.layer_shapes()
    ]
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def weights_to_bytes(weights: CaeWeights) -> bytes:
    header = _header_bytes(weights)
    parts = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)), header]
    for layer in weights.layers:
        parts.append(layer.kernels.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
    return b"".join(parts)


def weights_from_bytes(data: bytes) -> CaeWeights:
    if len(data) < _PREFIX.size:
        if data[:4] != MAGIC[:len(data[:4])]:
            raise WeightFormatError("not a CAEW weight file (bad magic)")
        raise TruncatedWeightsError(f"file is {len(data)} bytes, shorter than the {_PREFIX.size}-byte prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise WeightFormatError(f"not a CAEW weight file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise WeightVersionError(f"unsupported CAEW format version {version} (expected {FORMAT_VERSION})")
    end = _PREFIX.size + hlen
    if len(data) < end:
        raise TruncatedWeightsError(f"header declares {hlen} bytes but only {len(data) - _PREFIX.size} present")
    try:
        header = json.loads(data[_PREFIX.size:end].decode("utf-8"))
        arch = CaeArchitecture.from_dict(header)
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise WeightFormatError(f"unreadable CAEW header: {exc}") from exc
    except ValueError as exc:
        raise WeightShapeError(f"inconsistent architecture in header: {exc}") from exc

    expected = arch.layer_shapes()
    declared = header.get("layers", [])
    if len(declared) != len(expected):
        raise WeightShapeError(f"header lists {len(declared)} layers, architecture needs {len(expected)}")
    for d, (name, o, i) in zip(declared, expected):
        if d.get("name") != name or list(d.get("kernels", [])) != [o, i, 3, 3] or list(d.get("bias", [])) != [o]:
            raise WeightShapeError(f"layer {d.get('name')!r}: declared shapes do not match architecture {name} "
                                   f"({o}, {i}, 3, 3)")

    payload = np.frombuffer(data, dtype="<f4", offset=end, count=(len(data) - end) // 4)
    need = arch.n_params()
    if payload.size < need:
        raise TruncatedWeightsError(f"payload holds {payload.size} parameters, architecture needs {need}")
    if len(data) - end != 4 * need:
        raise WeightFormatError(f"{len(data) - end - 4 * need} trailing bytes after the parameter payload")

    layers, pos = [], 0
    for _, o, i in expected:
        k = payload[pos:pos + o * i * 9].reshape(o, i, 3, 3).astype(np.float32)
        pos += o * i * 9
        b = payload[pos:pos + o].astype(np.float32)
        pos += o
        layers.append(nn.ConvLayer(k, b))
    return CaeWeights(arch, layers)


def save_weights(weights: CaeWeights, path) -> None:
    Path(path).write_bytes(weights_to_bytes(weights))


def load_weights(path) -> CaeWeights:
    return weights_from_bytes(Path(path).read_bytes())


def history_to_dicts(history: TrainingHistory) -> list[dict]:
    return [asdict(r) for r in history.records]
