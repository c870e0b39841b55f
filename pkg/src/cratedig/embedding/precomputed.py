"""Backend that serves embeddings from a directory of precomputed files.

Entry files use the same binary layout as the embedding cache and are
named by a backend-independent content hash, so a heavier offline job
can populate a directory that this backend replays byte-for-byte.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from ..errors import BackendFailureError
from . import KIND_AUDIO, KIND_TEXT, EncoderBackend, normalize_prompt
from .cache import decode_entry, encode_entry


def audio_entry_key(samples: np.ndarray, rate: int) -> str:
    h = hashlib.sha256()
    h.update(b"cratedig-precomputed\x00audio\x00")
    h.update(int(rate).to_bytes(4, "little"))
    h.update(np.ascontiguousarray(samples, dtype="<f4").tobytes())
    return h.hexdigest()


def text_entry_key(prompt: str) -> str:
    h = hashlib.sha256()
    h.update(b"cratedig-precomputed\x00text\x00")
    h.update(normalize_prompt(prompt).encode("utf-8"))
    return h.hexdigest()


def store_audio_entry(root: Path | str, samples: np.ndarray, rate: int,
                      vector: np.ndarray) -> Path:
    path = Path(root) / audio_entry_key(samples, rate)
    path.write_bytes(encode_entry(vector))
    return path


def store_text_entry(root: Path | str, prompt: str, vector: np.ndarray) -> Path:
    path = Path(root) / text_entry_key(prompt)
    path.write_bytes(encode_entry(vector))
    return path


class PrecomputedBackend(EncoderBackend):
    """Replays embeddings from disk; any unlisted input is an error."""

    name = "precomputed"
    capabilities = frozenset({KIND_AUDIO, KIND_TEXT})
    thread_safe = True

    def __init__(self, root: Path | str, dim: int = 512):
        super().__init__()
        self.root = Path(root)
        if not self.root.is_dir():
            raise BackendFailureError(f"precomputed directory not found: {self.root}")
        self.dim = int(dim)
        self.version = "1"

    def _lookup(self, key: str, described: str) -> np.ndarray:
        path = self.root / key
        try:
            blob = path.read_bytes()
        except FileNotFoundError:
            raise BackendFailureError(
                f"no precomputed embedding for {described} (expected file {path})"
            ) from None
        return decode_entry(blob)

    def _encode_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        key = audio_entry_key(samples, rate)
        return self._lookup(key, f"audio input ({len(samples)} samples @ {rate} Hz)")

    def _encode_text(self, prompt: str) -> np.ndarray:
        return self._lookup(text_entry_key(prompt), f"prompt {prompt!r}")
