"""EMB1 embedding-table I/O.

The EMB1 binary format is the wire contract between the embedding
extractor and the fusion core:

    magic  "EMB1"          4 ASCII bytes
    u32    version = 1
    u32    dim
    u64    entry count
    per entry:
        u32    id byte length
        bytes  id (UTF-8)
        f32[dim] vector

All integers and floats are little-endian. Entries are written in sorted-id
order, so serialization is byte-deterministic. Vectors are float32 on disk
and widened to float64 in memory.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
VERSION = 1

_HEADER = struct.Struct("<4sIIQ")
_ENTRY_HEAD = struct.Struct("<I")


class EmbeddingFormatError(ValueError):
    """Raised for malformed EMB1 files."""


class MissingEmbeddingError(KeyError):
    """Raised when an id has no row in a table (extractor/dataset mismatch)."""

    def __init__(self, table_name: str, missing_id: str):
        super().__init__(missing_id)
        self.missing_id = missing_id
        self.table_name = table_name

    def __str__(self):
        return f"id {self.missing_id!r} not found in embedding table {self.table_name!r}"


class EmbeddingTable:
    """Id-keyed fixed-dimension vectors; immutable after construction."""

    def __init__(self, dim: int, entries: dict[str, np.ndarray], name: str = ""):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.name = name
        self._entries: dict[str, np.ndarray] = {}
        for key, vec in entries.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dim,):
                raise ValueError(
                    f"entry {key!r}: expected shape ({dim},), got {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"entry {key!r}: non-finite component")
            arr.flags.writeable = False
            self._entries[key] = arr

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def ids(self) -> list[str]:
        return sorted(self._entries)

    def lookup(self, key: str) -> np.ndarray:
        try:
            return self._entries[key]
        except KeyError:
            raise MissingEmbeddingError(self.name, key) from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return (
            self.dim == other.dim
            and self._entries.keys() == other._entries.keys()
            and all(np.array_equal(self._entries[k], other._entries[k]) for k in self._entries)
        )


def concat(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Concatenate two vectors, v1 first."""
    return np.concatenate([np.asarray(v1, dtype=np.float64).ravel(),
                           np.asarray(v2, dtype=np.float64).ravel()])


def write_table(table: EmbeddingTable, path: str | Path) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, table.dim, len(table)))
        for key in table.ids():
            id_bytes = key.encode("utf-8")
            fh.write(_ENTRY_HEAD.pack(len(id_bytes)))
            fh.write(id_bytes)
            fh.write(table.lookup(key).astype("<f4").tobytes())


def read_table(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    if dim <= 0:
        raise EmbeddingFormatError(f"{path}: non-positive dim {dim}")
    offset = _HEADER.size
    vec_bytes = 4 * dim
    entries: dict[str, np.ndarray] = {}
    for i in range(count):
        if offset + _ENTRY_HEAD.size > len(data):
            raise EmbeddingFormatError(f"{path}: truncated at entry {i}")
        (id_len,) = _ENTRY_HEAD.unpack_from(data, offset)
        offset += _ENTRY_HEAD.size
        if offset + id_len + vec_bytes > len(data):
            raise EmbeddingFormatError(f"{path}: truncated at entry {i}")
        key = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).astype(np.float64)
        offset += vec_bytes
        if key in entries:
            raise EmbeddingFormatError(f"{path}: duplicate id {key!r}")
        if not all(math.isfinite(x) for x in vec):
            raise EmbeddingFormatError(f"{path}: non-finite value for id {key!r}")
        entries[key] = vec
    if offset != len(data):
        raise EmbeddingFormatError(f"{path}: {len(data) - offset} trailing bytes")
    return EmbeddingTable(dim, entries, name=path.name)
