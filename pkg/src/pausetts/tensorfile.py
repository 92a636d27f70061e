"""Reader/writer for the ``.pst`` tensor container.

Layout: magic ``PST1``, u32 little-endian rank, u32 dims[rank], then
little-endian float32 values in row-major order.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"PST1"


class TensorFileError(ValueError):
    pass


def encode_pst(array) -> bytes:
    arr = np.ascontiguousarray(np.asarray(array, dtype="<f4"))
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def decode_pst(data: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(data) < 8 or data[:4] != MAGIC:
        raise TensorFileError(f"{source}: bad magic, not a PST1 tensor file")
    (rank,) = struct.unpack_from("<I", data, 4)
    offset = 8 + 4 * rank
    if len(data) < offset:
        raise TensorFileError(f"{source}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(data) != offset + 4 * count:
        raise TensorFileError(
            f"{source}: payload has {len(data) - offset} bytes, expected {4 * count} for shape {dims}"
        )
    return np.frombuffer(data, dtype="<f4", offset=offset, count=count).reshape(dims).astype(np.float32)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pst(path, array) -> None:
    atomic_write_bytes(path, encode_pst(array))


def read_pst(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise TensorFileError(f"{path}: {exc.strerror or exc}") from exc
    return decode_pst(data, str(path))
