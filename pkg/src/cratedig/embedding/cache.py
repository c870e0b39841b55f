"""On-disk embedding store: one file per content-hash key.

File layout: 8-byte magic, little-endian uint32 dim, then dim float32
values little-endian.  Writes go through a temp file and ``os.replace``
so concurrent readers never observe a half-written entry.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import CacheCorruptError
from . import Embedding

MAGIC = b"CDGEMB01"
_HEADER = struct.Struct("<8sI")


def encode_entry(vector: np.ndarray) -> bytes:
    vec = np.ascontiguousarray(vector, dtype="<f4")
    return _HEADER.pack(MAGIC, vec.size) + vec.tobytes()


def decode_entry(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise CacheCorruptError(f"entry truncated at {len(blob)} bytes")
    magic, dim = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CacheCorruptError(f"bad magic {magic!r}")
    expected = _HEADER.size + 4 * dim
    if dim == 0 or len(blob) != expected:
        raise CacheCorruptError(f"entry has {len(blob)} bytes, expected {expected}")
    vec = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    if not np.all(np.isfinite(vec)):
        raise CacheCorruptError("entry contains non-finite values")
    return vec.copy()


class EmbeddingCache:
    """Filesystem-backed embedding cache keyed by content hashes."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        if not key or any(c not in "0123456789abcdef" for c in key):
            raise ValueError(f"cache key must be a lowercase hex digest, got {key!r}")
        return self.root / key

    def contains(self, key: str) -> bool:
        return self.path_for(key).is_file()

    def get(self, key: str) -> np.ndarray | None:
        """Return the stored vector, or None on miss or corrupt entry."""
        path = self.path_for(key)
        try:
            blob = path.read_bytes()
        except FileNotFoundError:
            return None
        try:
            return decode_entry(blob)
        except CacheCorruptError:
            return None

    def put(self, key: str, vector: np.ndarray) -> None:
        path = self.path_for(key)
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(encode_entry(vector))
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def get_or_compute(self, key: str, kind: str,
                       compute: Callable[[], Embedding]) -> tuple[Embedding, bool]:
        """Return (embedding, hit).  Misses and corrupt entries recompute
        and rewrite the entry."""
        vec = self.get(key)
        if vec is not None:
            try:
                return Embedding(vec, kind), True
            except ValueError:
                pass  # stored vector fails embedding invariants: recompute
        emb = compute()
        self.put(key, emb.vector)
        return emb, False
