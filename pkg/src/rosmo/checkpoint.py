"""Flat named-array checkpoint archive, format "rosmo-ckpt-v1".

Layout: a version line, then a uint32 entry count, then per entry
  uint16 name length | name utf-8 | uint8 ndim | uint32 dims... | float32 payload
with all integers and floats little-endian.  Entry order is preserved.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CKPT_VERSION = b"rosmo-ckpt-v1"


class CheckpointError(RuntimeError):
    pass


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(CKPT_VERSION + b"\n")
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def load_arrays(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    header, sep, _ = raw.partition(b"\n")
    if not sep or header != CKPT_VERSION:
        raise CheckpointError(
            f"{path}: bad checkpoint header {header[:32]!r}, expected {CKPT_VERSION!r}")
    off = len(header) + 1
    try:
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            end = off + 4 * n
            if end > len(raw):
                raise CheckpointError(f"{path}: truncated payload for entry {name!r}")
            arrays[name] = np.frombuffer(raw[off:end], dtype="<f4").reshape(shape).copy()
            off = end
    except struct.error as e:
        raise CheckpointError(f"{path}: truncated checkpoint ({e})") from e
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes after last entry")
    return arrays
