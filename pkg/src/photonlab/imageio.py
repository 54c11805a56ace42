"""Small image containers: binary/plain PGM, 8-bit PNG, and raw float32 F32I."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

F32I_MAGIC = b"F32I"
_F32I_HEADER = struct.Struct("<4sII4x")  # magic, height, width, reserved


class ImageFormatError(ValueError):
    pass


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Scale [0,1] floats to 0..255, rounding half up."""
    img = np.asarray(img, dtype=np.float64)
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_pgm(path, img: np.ndarray, plain: bool = False, maxval: int | None = None) -> None:
    """Write an integer image as P5 (binary) or P2 (plain text) PGM."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-d image, got shape {img.shape}")
    if not np.issubdtype(img.dtype, np.integer):
        raise TypeError("write_pgm takes integer pixel values; convert with to_uint8 first")
    if img.size and img.min() < 0:
        raise ValueError("PGM pixels must be nonnegative")
    top = int(img.max()) if img.size else 0
    maxval = maxval if maxval is not None else max(255 if not plain else 1, top)
    if top > maxval or not 0 < maxval < 65536:
        raise ValueError(f"maxval {maxval} cannot hold pixel value {top}")
    h, w = img.shape
    if plain:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in img)
        Path(path).write_bytes(f"P2\n{w} {h}\n{maxval}\n{rows}\n".encode("ascii"))
    else:
        dtype = ">u1" if maxval < 256 else ">u2"
        Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + img.astype(dtype).tobytes())


def _pgm_tokens(data: bytes, count: int, pos: int):
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a P2 or P5 PGM; returns (pixels as int64, maxval)."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ImageFormatError(f"{path}: not a PGM file (magic {magic!r})")
    (ws, hs, ms), pos = _pgm_tokens(data, 3, 2)
    w, h, maxval = int(ws), int(hs), int(ms)
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = ">u1" if maxval < 256 else ">u2"
        nbytes = w * h * np.dtype(dtype).itemsize
        raw = data[pos:pos + nbytes]
        if len(raw) != nbytes:
            raise ImageFormatError(f"{path}: truncated pixel data")
        img = np.frombuffer(raw, dtype=dtype).reshape(h, w).astype(np.int64)
    else:
        values = data[pos:].split()
        if len(values) < w * h:
            raise ImageFormatError(f"{path}: truncated pixel data")
        img = np.array([int(v) for v in values[:w * h]], dtype=np.int64).reshape(h, w)
    return img, maxval


def write_png(path, img: np.ndarray) -> None:
    from PIL import Image

    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = to_uint8(img)
    Image.fromarray(img, mode="L").save(path)


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_f32i(path, img: np.ndarray) -> None:
    """Lossless float32 image: 16-byte header (magic, height, width, reserved) then LE floats."""
    img = np.asarray(img, dtype="<f4")
    if img.ndim != 2:
        raise ValueError(f"F32I needs a 2-d image, got shape {img.shape}")
    Path(path).write_bytes(_F32I_HEADER.pack(F32I_MAGIC, *img.shape) + img.tobytes())


def read_f32i(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _F32I_HEADER.size:
        raise ImageFormatError(f"{path}: truncated F32I header")
    magic, h, w = _F32I_HEADER.unpack_from(data)
    if magic != F32I_MAGIC:
        raise ImageFormatError(f"{path}: bad F32I magic {magic!r}")
    body = data[_F32I_HEADER.size:]
    if len(body) != 4 * h * w:
        raise ImageFormatError(f"{path}: expected {4 * h * w} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).copy()


def read_image(path) -> np.ndarray:
    """Load any supported image as float64 in [0,1] (F32I is returned unscaled)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".f32":
        return read_f32i(path).astype(np.float64)
    if suffix == ".png":
        return read_png(path).astype(np.float64) / 255.0
    img, maxval = read_pgm(path)
    return img.astype(np.float64) / maxval
