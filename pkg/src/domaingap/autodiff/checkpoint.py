"""Binary parameter container.

Layout (all integers little-endian)::

    b"DGCK"            magic
    u32                format version (currently 1)
    repeated until EOF:
        u32            name length in bytes
        bytes          UTF-8 name
        u32            rank
        u64 * rank     extents
        f64 * prod     values, row-major

Rank-0 records hold a single scalar (iteration counters, ADAM step counts).
"""

from __future__ import annotations

import os
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from ..exceptions import ImageFormatError
from .tensor import Tensor

MAGIC = b"DGCK"
VERSION = 1


class CheckpointError(ImageFormatError):
    """Malformed checkpoint file."""


def encode(arrays: Mapping[str, np.ndarray | Tensor | float]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, value in arrays.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        arr = np.asarray(arr, dtype="<f8", order="C")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a DGCK checkpoint (bad magic)")
    if len(blob) < 8:
        raise CheckpointError("truncated header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 8
    try:
        while pos < len(blob):
            (nlen,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            nbytes = 8 * count
            if pos + nbytes > len(blob):
                raise CheckpointError(f"record {name!r} truncated")
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
            out[name] = arr.astype(np.float64)
            pos += nbytes
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    return out


def save_checkpoint(path: str | os.PathLike, arrays: Mapping[str, np.ndarray | Tensor | float]) -> None:
    Path(path).write_bytes(encode(arrays))


def load_checkpoint(path: str | os.PathLike) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())
