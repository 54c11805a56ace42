"""IDX parsing, seeded train/test splits, and cached (frame, truth) pair sets."""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imageio import read_pgm, write_pgm
from .photon_sim import CameraModel, derive_seed, get_preset, simulate_frame

# IDX type codes; only unsigned bytes are supported (all MNIST/EMNIST files use them)
IDX_TYPES = {0x08: np.dtype(">u1")}
_KNOWN_IDX_CODES = {0x08, 0x09, 0x0B, 0x0C, 0x0D, 0x0E}


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxTypeError(IdxError):
    pass


@dataclass
class IdxArray:
    type_code: int
    shape: tuple
    data: np.ndarray  # shaped array

    def images(self) -> np.ndarray:
        """Elements scaled to [0,1] as float64."""
        return self.data.astype(np.float64) / 255.0


def parse_idx(raw: bytes, normalize: bool = False):
    """Parse an IDX blob. With ``normalize`` returns a float64 array in [0,1] instead of an IdxArray."""
    raw = bytes(raw)
    if len(raw) < 4:
        raise IdxTruncatedError(f"IDX needs a 4-byte magic, got {len(raw)} bytes")
    if raw[0] != 0 or raw[1] != 0:
        raise IdxMagicError(f"bad IDX magic {raw[:4].hex()}: first two bytes must be zero")
    code, ndim = raw[2], raw[3]
    if code not in _KNOWN_IDX_CODES:
        raise IdxMagicError(f"bad IDX magic {raw[:4].hex()}: unknown type code 0x{code:02x}")
    if ndim == 0:
        raise IdxMagicError(f"bad IDX magic {raw[:4].hex()}: zero dimensions")
    if code not in IDX_TYPES:
        raise IdxTypeError(f"unsupported IDX element type 0x{code:02x} (only unsigned byte)")
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IdxTruncatedError(f"IDX header declares {ndim} dims but has only {len(raw)} bytes")
    shape = struct.unpack(f">{ndim}I", raw[4:head])
    dtype = IDX_TYPES[code]
    need = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    have = len(raw) - head
    if have < need:
        raise IdxTruncatedError(f"IDX payload has {have} bytes, shape {shape} needs {need}")
    if have > need:
        raise IdxTruncatedError(f"IDX payload has {have - need} trailing bytes beyond shape {shape}")
    data = np.frombuffer(raw, dtype=dtype, count=need // dtype.itemsize, offset=head).reshape(shape)
    arr = IdxArray(code, tuple(int(s) for s in shape), data.astype(np.uint8))
    return arr.images() if normalize else arr


def serialize_idx(arr) -> bytes:
    data = arr.data if isinstance(arr, IdxArray) else np.asarray(arr)
    if data.dtype != np.uint8:
        raise IdxTypeError(f"can only serialize uint8 arrays, got {data.dtype}")
    header = bytes([0, 0, 0x08, data.ndim]) + struct.pack(f">{data.ndim}I", *data.shape)
    return header + data.tobytes()


def read_idx(path, normalize: bool = False):
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    try:
        return parse_idx(raw, normalize)
    except IdxError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def write_idx(path, arr) -> None:
    Path(path).write_bytes(serialize_idx(arr))


# -- splits --------------------------------------------------------------------

@dataclass
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray


def make_split(n_available: int, train_count: int, test_count: int, seed: int) -> Split:
    """Disjoint seeded split: the first ``train_count`` then next ``test_count`` of one permutation."""
    if train_count < 0 or test_count < 0:
        raise ValueError("split counts must be >= 0")
    if train_count + test_count > n_available:
        raise ValueError(f"split needs {train_count + test_count} images, only {n_available} available")
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B11])).permutation(n_available)
    return Split(perm[:train_count].copy(), perm[train_count:train_count + test_count].copy())


# -- pair sets -----------------------------------------------------------------

@dataclass
class PairSet:
    frames: np.ndarray           # (n, h, w) uint8 in {0,1}
    truths: np.ndarray           # (n, h, w) float64 in [0,1]
    indices: list                # source image index per pair
    stream_seeds: list
    camera_preset: str
    master_seed: int
    dataset: str = ""
    camera: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.indices)

    def float_frames(self) -> np.ndarray:
        return self.frames.astype(np.float32)


def _resolve_camera(camera) -> tuple[str, CameraModel]:
    if isinstance(camera, CameraModel):
        return "custom", camera
    return camera, get_preset(camera)


def build_pairs(images: np.ndarray, indices, camera, master_seed: int, dataset: str = "") -> PairSet:
    """One single-exposure frame per clean image; the frame for source index i uses stream (master_seed, i)."""
    name, cam = _resolve_camera(camera)
    indices = [int(i) for i in indices]
    seeds = [derive_seed(master_seed, i) for i in indices]
    truths = np.stack([np.asarray(images[i], dtype=np.float64) for i in indices]) if indices \
        else np.zeros((0,) + np.shape(images)[1:])
    frames = np.stack([simulate_frame(t, cam, s) for t, s in zip(truths, seeds)]) if indices \
        else np.zeros(truths.shape, np.uint8)
    return PairSet(frames, truths, indices, seeds, name, int(master_seed), dataset, cam.to_dict())


def save_pairs(pairs: PairSet, directory) -> Path:
    """Write frames (P5, 0/255), truths (P5, 8-bit) and manifest.json into ``directory``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "frames").mkdir(exist_ok=True)
        (directory / "truths").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create pair cache at {directory}: {exc}") from exc
    entries = []
    for k, (idx, seed) in enumerate(zip(pairs.indices, pairs.stream_seeds)):
        frame_name = f"frames/{idx:06d}.pgm"
        truth_name = f"truths/{idx:06d}.pgm"
        write_pgm(directory / frame_name, (pairs.frames[k] * 255).astype(np.uint8))
        write_pgm(directory / truth_name, np.floor(pairs.truths[k] * 255 + 0.5).astype(np.uint8))
        entries.append({"index": idx, "frame": frame_name, "truth": truth_name, "stream_seed": seed})
    manifest = {
        "dataset": pairs.dataset,
        "camera_preset": pairs.camera_preset,
        "camera": pairs.camera,
        "master_seed": pairs.master_seed,
        "count": len(entries),
        "pairs": entries,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return directory


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"no pair manifest at {path}") from None


def load_pairs(directory) -> PairSet:
    directory = Path(directory)
    m = read_manifest(directory)
    frames, truths = [], []
    for e in m["pairs"]:
        f, _ = read_pgm(directory / e["frame"])
        t, maxval = read_pgm(directory / e["truth"])
        frames.append((f > 0).astype(np.uint8))
        truths.append(t / maxval)
    shape = (0, 28, 28)
    return PairSet(
        np.stack(frames) if frames else np.zeros(shape, np.uint8),
        np.stack(truths) if truths else np.zeros(shape),
        [e["index"] for e in m["pairs"]],
        [e["stream_seed"] for e in m["pairs"]],
        m["camera_preset"], m["master_seed"], m.get("dataset", ""), m.get("camera", {}),
    )


def regenerate_frames(pairs: PairSet) -> np.ndarray:
    """Re-simulate every frame from its provenance (truth, camera, stream seed)."""
    cam = CameraModel(**pairs.camera) if pairs.camera else get_preset(pairs.camera_preset)
    return np.stack([simulate_frame(t, cam, s) for t, s in zip(pairs.truths, pairs.stream_seeds)])
