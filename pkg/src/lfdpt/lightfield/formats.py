"""On-disk formats: LFR light-field containers, 16-bit PGM views, tensor blobs.

LFR layout (little-endian): ``b"LFR1"``, five uint32 extents U, V, C, H, W,
then U*V*C*H*W float32 samples in [u][v][c][h][w] order.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from ..errors import DimensionError, FormatError

LFR_MAGIC = b"LFR1"
BLOB_MAGIC = b"LFT1"
_MAX_ELEMENTS = 1 << 31


def write_lfr(path, lf: np.ndarray) -> None:
    lf = np.asarray(lf)
    if lf.ndim != 5:
        raise DimensionError(f"LFR stores [U, V, C, H, W] fields, got {lf.shape}")
    header = LFR_MAGIC + struct.pack("<5I", *lf.shape)
    payload = np.ascontiguousarray(lf, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_lfr(path) -> np.ndarray:
    """Load an LFR file as a float64 array (values are exact float32)."""
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:4] != LFR_MAGIC:
        raise FormatError(f"{path}: not an LFR1 file")
    shape = struct.unpack("<5I", raw[4:24])
    count = 1
    for n in shape:
        if n == 0:
            raise FormatError(f"{path}: zero extent in {shape}")
        count *= n
        if count > _MAX_ELEMENTS:
            raise FormatError(f"{path}: extents {shape} overflow")
    if len(raw) - 24 != 4 * count:
        raise FormatError(f"{path}: payload has {len(raw) - 24} bytes, expected {4 * count}")
    data = np.frombuffer(raw, dtype="<f4", offset=24).reshape(shape)
    return data.astype(np.float64)


def write_blob(path, name: str, arr: np.ndarray) -> None:
    """Named float64 tensor: magic, name, rank, extents, payload."""
    arr = np.asarray(arr, dtype=np.float64)
    encoded = name.encode("utf-8")
    parts = [BLOB_MAGIC, struct.pack("<I", len(encoded)), encoded,
             struct.pack("<I", arr.ndim), struct.pack(f"<{arr.ndim}I", *arr.shape),
             np.ascontiguousarray(arr, dtype="<f8").tobytes()]
    Path(path).write_bytes(b"".join(parts))


def read_blob(path) -> tuple[str, np.ndarray]:
    raw = Path(path).read_bytes()
    try:
        if raw[:4] != BLOB_MAGIC:
            raise FormatError(f"{path}: not a tensor blob")
        (nlen,) = struct.unpack_from("<I", raw, 4)
        pos = 8 + nlen
        name = raw[8:pos].decode("utf-8")
        (ndim,) = struct.unpack_from("<I", raw, pos)
        shape = struct.unpack_from(f"<{ndim}I", raw, pos + 4)
        pos += 4 + 4 * ndim
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    count = int(np.prod(shape, dtype=np.int64))
    if len(raw) - pos != 8 * count:
        raise FormatError(f"{path}: payload size mismatch for shape {shape}")
    return name, np.frombuffer(raw, dtype="<f8", offset=pos).reshape(shape).copy()


def quantize16(img: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(img, 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)


def write_pgm(path, img: np.ndarray) -> None:
    """Binary 16-bit PGM (P5, maxval 65535, big-endian samples)."""
    if img.ndim != 2:
        raise DimensionError(f"PGM holds a 2-d image, got {img.shape}")
    h, w = img.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + quantize16(img).astype(">u2").tobytes())


_PGM_HEADER = re.compile(rb"P5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)"
                         rb"(?:\s|#[^\n]*\n)+(\d+)\s")


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM back into [0, 1] floats."""
    raw = Path(path).read_bytes()
    m = _PGM_HEADER.match(raw)
    if not m:
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    dtype = ">u2" if maxval > 255 else "u1"
    size = np.dtype(dtype).itemsize * w * h
    body = raw[m.end():]
    if len(body) != size:
        raise FormatError(f"{path}: expected {size} sample bytes, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(h, w).astype(np.float64) / maxval


def export_pgm(lf: np.ndarray, out_dir) -> list[Path]:
    """Write one ``sai_u{u}_v{v}.pgm`` per view of a single-channel field."""
    if lf.ndim != 5 or lf.shape[2] != 1:
        raise DimensionError(f"PGM export needs a [U, V, 1, H, W] field, got {lf.shape}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for u in range(lf.shape[0]):
        for v in range(lf.shape[1]):
            p = out_dir / f"sai_u{u}_v{v}.pgm"
            write_pgm(p, lf[u, v, 0])
            written.append(p)
    return written
