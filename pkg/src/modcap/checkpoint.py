"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    b"MODCAP01"                        magic + format version
    uint32  parameter count
    repeated, in sorted name order:
        uint32  name length in bytes
        bytes   UTF-8 name
        uint32  rank
        uint64  dimension, ``rank`` times
        float64 values, C order
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

MAGIC = b"MODCAP01"


class CheckpointError(ValueError):
    pass


def dumps(params: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", len(params))]
    for name in sorted(params):
        values = np.ascontiguousarray(params[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}Q", *values.shape))
        chunks.append(values.tobytes())
    return b"".join(chunks)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:8]!r}, expected {MAGIC!r}")
    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"checkpoint truncated at byte {pos}")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        n_values = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(take(8 * n_values), dtype="<f8").reshape(shape)
        params[name] = values.astype(np.float64)
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last parameter")
    return params


def save_checkpoint(path: str | os.PathLike, params: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params))


def load_checkpoint(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return loads(fh.read())
