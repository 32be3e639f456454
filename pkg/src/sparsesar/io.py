"""File formats: grayscale image ingest, dB-scaled PGM export, the binary
denoiser weight container and RFC-4180 CSV tables.

Weight container layout (all little-endian)::

    magic      4 bytes   b"SSDW"
    version    uint32    1
    layers     uint32
    flags      uint32    bit 0 = residual
    lambda     float64
    per layer: out, in, kh, kw as uint32, then out*in*kh*kw float64 kernel
               values in row-major order, then out float64 biases
"""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .denoiser import DenoiserModel

WEIGHT_MAGIC = b"SSDW"
WEIGHT_VERSION = 1
_FLAG_RESIDUAL = 1


class FormatError(ValueError):
    """Unsupported or corrupt file."""


# ---- PGM -------------------------------------------------------------------


def _pgm_tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping ``#`` comments."""
    tokens: list[int] = []
    i = 2
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and buf[i:i + 1].isdigit():
            i += 1
        if start == i:
            raise FormatError("corrupt PGM header")
        tokens.append(int(buf[start:i]))
    if i >= n or not buf[i:i + 1].isspace():
        raise FormatError("corrupt PGM header: missing separator before pixel data")
    return tokens, i + 1


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Binary (P5) PGM as ``(pixels, maxval)``; 16-bit samples are big-endian."""
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    (width, height, maxval), offset = _pgm_tokens(buf, 3)
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PGM dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(buf) - offset < need:
        raise FormatError(f"{path}: truncated PGM pixel data")
    data = np.frombuffer(buf, dtype=dtype, count=width * height, offset=offset)
    return data.reshape(height, width).astype(np.int64), maxval


def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise ValueError("write_pgm expects a 2-D uint8 array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


# ---- ingest ------------------------------------------------------------------


def _read_png(path) -> tuple[np.ndarray, int]:
    from PIL import Image

    with Image.open(path) as img:
        if img.format != "PNG":
            raise FormatError(f"{path}: not a PNG file")
        if img.mode == "L":
            return np.asarray(img, dtype=np.int64), 255
        if img.mode in ("I;16", "I;16B", "I"):
            return np.asarray(img, dtype=np.int64), 65535
        raise FormatError(f"{path}: PNG mode {img.mode!r} is not single-channel grayscale")


def fit_raster(image: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Centre-crop or zero-pad to ``shape``.

    Along each axis the kept window starts at ``(n - target) // 2`` when
    cropping; when padding, ``(target - n) // 2`` zeros go before the data
    and the remainder after.
    """
    out = np.asarray(image, dtype=float)
    for axis, target in enumerate(shape):
        n = out.shape[axis]
        if n > target:
            start = (n - target) // 2
            out = np.take(out, range(start, start + target), axis=axis)
        elif n < target:
            before = (target - n) // 2
            pad = [(0, 0), (0, 0)]
            pad[axis] = (before, target - n - before)
            out = np.pad(out, pad)
    return out


def ingest_image(path, shape: tuple[int, int] = (256, 256)) -> np.ndarray:
    """Grayscale PGM (P5) or PNG scaled to a 0..255 peak and fitted to ``shape``."""
    path = Path(path)
    head = path.read_bytes()[:8]
    if head[:2] == b"P5":
        pixels, maxval = read_pgm(path)
    elif head == b"\x89PNG\r\n\x1a\n":
        pixels, maxval = _read_png(path)
    else:
        raise FormatError(f"{path}: unsupported image format (need P5 PGM or grayscale PNG)")
    values = pixels.astype(float)
    if maxval != 255:
        values *= 255.0 / maxval
    return fit_raster(values, shape)


# ---- export ------------------------------------------------------------------


def db_gray(image, db_floor: float = -40.0) -> np.ndarray:
    """8-bit gray levels: ``round(255 (dB - floor) / -floor)`` with
    ``dB = 20 log10(|x| / peak)`` clipped at ``floor``."""
    if not db_floor < 0:
        raise ValueError("db_floor must be negative")
    mag = np.abs(np.asarray(getattr(image, "data", image)))
    if not np.all(np.isfinite(mag)):
        raise ValueError("image contains non-finite values")
    peak = mag.max() if mag.size else 0.0
    if peak == 0:
        return np.zeros(mag.shape, dtype=np.uint8)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / peak)
    db = np.clip(db, db_floor, 0.0)
    return np.rint(255.0 * (db - db_floor) / -db_floor).astype(np.uint8)


def export_image(image, path, db_floor: float = -40.0) -> None:
    write_pgm(path, db_gray(image, db_floor))


# ---- weights -----------------------------------------------------------------


def save_weights(path, model: DenoiserModel, lam: float) -> None:
    parts = [
        WEIGHT_MAGIC,
        struct.pack("<IIId", WEIGHT_VERSION, model.depth, _FLAG_RESIDUAL if model.residual else 0, float(lam)),
    ]
    for w, b in zip(model.weights, model.biases):
        parts.append(struct.pack("<IIII", *w.shape))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path) -> tuple[DenoiserModel, float]:
    buf = Path(path).read_bytes()
    if buf[:4] != WEIGHT_MAGIC:
        raise FormatError(f"{path}: bad weight container magic")
    try:
        version, layers, flags, lam = struct.unpack_from("<IIId", buf, 4)
        if version != WEIGHT_VERSION:
            raise FormatError(f"{path}: unsupported weight container version {version}")
        offset = 4 + struct.calcsize("<IIId")
        weights, biases = [], []
        for _ in range(layers):
            shape = struct.unpack_from("<IIII", buf, offset)
            offset += 16
            n = int(np.prod(shape))
            weights.append(np.frombuffer(buf, "<f8", n, offset).reshape(shape).astype(float))
            offset += 8 * n
            biases.append(np.frombuffer(buf, "<f8", shape[0], offset).astype(float))
            offset += 8 * shape[0]
    except (struct.error, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: truncated weight container") from exc
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes in weight container")
    return DenoiserModel(weights, biases, bool(flags & _FLAG_RESIDUAL)), lam


# ---- tables ------------------------------------------------------------------


def format_number(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return f"{float(value):.6f}"
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with minimal RFC-4180 quoting and CRLF line ends."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    return rows[0], rows[1:]
