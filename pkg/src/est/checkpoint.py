"""ESTW parameter checkpoints.

Layout (little-endian): b"ESTW", u32 version (1), u32 count, then per
parameter: u16 name length, UTF-8 name, u8 rank, rank x u32 extents,
float64 data in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"ESTW"
VERSION = 1


def dumps(params: Mapping[str, Tensor | np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, value in params.items():
        # asarray, not ascontiguousarray: the latter promotes rank 0 to rank 1
        data = np.asarray(value.data if isinstance(value, Tensor) else value,
                          dtype="<f8", order="C")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    def need(offset: int, n: int, what: str):
        if offset + n > len(buf):
            raise FormatError(f"truncated checkpoint while reading {what}", offset)

    need(0, 12, "header")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    offset = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        need(offset, 2, "name length")
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        need(offset, name_len + 1, "name")
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        rank = buf[offset]
        offset += 1
        need(offset, 4 * rank, f"extents of {name!r}")
        shape = struct.unpack_from(f"<{rank}I", buf, offset)
        offset += 4 * rank
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        need(offset, nbytes, f"data of {name!r}")
        out[name] = np.frombuffer(buf, dtype="<f8", count=nbytes // 8,
                                  offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes after last parameter", offset)
    return out


def save(params: Mapping[str, Tensor | np.ndarray], path) -> None:
    Path(path).write_bytes(dumps(params))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
