"""EMB1 writer: the binary wire format consumed by the fusion side.

Layout (little-endian): magic "EMB1", u32 version 1, u32 dim, u64 entry
count; then per entry a u32 id byte length, the UTF-8 id, and dim float32
values. Entries are written in sorted id order so identical tables are
byte-identical, and the file lands atomically (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
VERSION = 1


def write_emb1(dim: int, entries: dict[str, np.ndarray], path: str | Path) -> None:
    if dim < 1:
        raise ValueError("dim must be positive")
    path = Path(path)
    payload = [struct.pack("<4sIIQ", MAGIC, VERSION, dim, len(entries))]
    for key in sorted(entries):
        vec = np.asarray(entries[key], dtype=np.float32)
        if vec.shape != (dim,):
            raise ValueError(f"entry {key!r} has shape {vec.shape}, expected ({dim},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"entry {key!r} contains non-finite values")
        encoded = key.encode("utf-8")
        payload.append(struct.pack("<I", len(encoded)))
        payload.append(encoded)
        payload.append(vec.tobytes())
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(payload))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
