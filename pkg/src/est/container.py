"""ESTV dataset container.

Little-endian layout: b"ESTV", u32 version (1), u32 num_videos,
u32 num_classes; then per video u32 label, T, H, W, C followed by
T*H*W*C float32 pixels. Video ids are record positions.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .pipeline import Video

MAGIC = b"ESTV"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_RECORD = struct.Struct("<5I")


@dataclass
class Dataset:
    videos: list[Video]
    num_classes: int

    def __len__(self) -> int:
        return len(self.videos)

    def labels(self) -> np.ndarray:
        return np.array([v.label for v in self.videos], dtype=int)

    def subset(self, indices) -> Dataset:
        return Dataset([self.videos[i] for i in indices], self.num_classes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset) or self.num_classes != other.num_classes:
            return False
        if len(self) != len(other):
            return False
        return all(a.label == b.label and a.frames.shape == b.frames.shape
                   and a.frames.astype("<f4").tobytes() == b.frames.astype("<f4").tobytes()
                   for a, b in zip(self.videos, other.videos))


def dumps(dataset: Dataset) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(dataset), dataset.num_classes)]
    for v in dataset.videos:
        parts.append(_RECORD.pack(v.label, *v.frames.shape))
        parts.append(np.ascontiguousarray(v.frames, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> Dataset:
    if len(buf) < _HEADER.size:
        raise FormatError("file shorter than the ESTV header", len(buf))
    magic, version, count, num_classes = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported ESTV version {version}", 4)
    offset = _HEADER.size
    videos = []
    for i in range(count):
        if offset + _RECORD.size > len(buf):
            raise FormatError(f"record {i}: truncated record header", offset)
        label, t, h, w, c = _RECORD.unpack_from(buf, offset)
        if label >= num_classes:
            raise FormatError(f"record {i}: label {label} >= num_classes {num_classes}", offset)
        offset += _RECORD.size
        n = t * h * w * c
        if n == 0:
            raise FormatError(f"record {i}: zero extent in shape {(t, h, w, c)}", offset - 16)
        if offset + 4 * n > len(buf):
            raise FormatError(f"record {i}: pixel payload needs {4 * n} bytes, "
                              f"{len(buf) - offset} remain", offset)
        frames = np.frombuffer(buf, dtype="<f4", count=n, offset=offset).reshape(t, h, w, c)
        videos.append(Video(frames.astype(np.float32), int(label), i))
        offset += 4 * n
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes after record {count - 1}", offset)
    return Dataset(videos, num_classes)


def write_container(dataset: Dataset, path) -> None:
    Path(path).write_bytes(dumps(dataset))


def read_container(path) -> Dataset:
    return loads(Path(path).read_bytes())
