"""Little-endian binary tensor format.

Layout: ``b"HATN"``, version u32, rank u32, dims u64[rank], precision u8
(4 or 8 bytes per element), raw buffer.
"""
from __future__ import annotations

import io
import os
import struct
import tempfile
from typing import BinaryIO, Union

import numpy as np

MAGIC = b"HATN"
VERSION = 1
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


class FormatError(ValueError):
    pass


def write_tensor(f: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    tag = arr.dtype.itemsize
    if arr.dtype.kind != "f" or tag not in _DTYPES:
        raise FormatError(f"unsupported dtype {arr.dtype}")
    f.write(MAGIC)
    f.write(struct.pack("<II", VERSION, arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(struct.pack("<B", tag))
    f.write(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())


def _read_exact(f: BinaryIO, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("truncated tensor record")
    return buf


def read_tensor(f: BinaryIO) -> np.ndarray:
    if _read_exact(f, 4) != MAGIC:
        raise FormatError("bad tensor magic")
    version, rank = struct.unpack("<II", _read_exact(f, 8))
    if version != VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    dims = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank))
    (tag,) = struct.unpack("<B", _read_exact(f, 1))
    if tag not in _DTYPES:
        raise FormatError(f"bad precision tag {tag}")
    dtype = _DTYPES[tag]
    count = int(np.prod(dims, dtype=np.int64))
    data = np.frombuffer(_read_exact(f, count * dtype.itemsize), dtype=dtype)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(data))


def atomic_write(path: Union[str, os.PathLike], data: Union[bytes, str]) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
