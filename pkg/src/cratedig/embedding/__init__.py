"""Shared audio/text embedding space: backends, normalization, caching.

Every vector leaving this module is unit-norm, so downstream dot products
are cosines.  Backends are pluggable: a deterministic mock for tests, a
precomputed-file store, and a pretrained-model runner.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import numpy as np

from .. import audio as audio_mod
from ..audio import AudioBuffer
from ..errors import BackendFailureError, EmptyPromptError, UnsupportedModalityError

KIND_AUDIO = "audio"
KIND_TEXT = "text"

_NORM_TOL = 1e-5


@dataclass(frozen=True)
class Embedding:
    """Unit-norm float32 vector tagged with its modality."""

    vector: np.ndarray
    kind: str

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError(f"embedding must be a nonempty vector, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("embedding contains NaN or infinity")
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"embedding norm {norm} is not 1.0 within {_NORM_TOL}")
        if self.kind not in (KIND_AUDIO, KIND_TEXT):
            raise ValueError(f"unknown embedding kind {self.kind!r}")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.size)

    @classmethod
    def from_raw(cls, vec: np.ndarray, kind: str) -> "Embedding":
        """Normalize a raw backend output into a valid embedding."""
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(vec))
        if not np.isfinite(norm) or norm == 0.0:
            raise BackendFailureError("backend produced a zero or non-finite vector")
        return cls((vec / norm).astype(np.float32), kind)


class EncoderBackend:
    """Base class for encoder backends.

    Subclasses implement ``_encode_audio`` / ``_encode_text`` and declare
    ``sample_rate`` (required input rate, None for any) and
    ``max_duration`` (receptive field in seconds, None for unlimited).
    Call counters let tests and cache checks observe real inference work.
    Backends that are not thread-safe are serialized through ``_lock``.
    """

    name: str = "backend"
    version: str = "0"
    dim: int = 512
    capabilities: frozenset = frozenset()
    sample_rate: int | None = None
    max_duration: float | None = None
    thread_safe: bool = True

    def __init__(self):
        self._lock = threading.Lock()
        self._counter_lock = threading.Lock()
        self.audio_calls = 0
        self.text_calls = 0

    def reset_counters(self) -> None:
        with self._counter_lock:
            self.audio_calls = 0
            self.text_calls = 0

    def _encode_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        raise NotImplementedError

    def _encode_text(self, prompt: str) -> np.ndarray:
        raise NotImplementedError

    def encode_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        with self._counter_lock:
            self.audio_calls += 1
        if self.thread_safe:
            return self._encode_audio(samples, rate)
        with self._lock:
            return self._encode_audio(samples, rate)

    def encode_text(self, prompt: str) -> np.ndarray:
        with self._counter_lock:
            self.text_calls += 1
        if self.thread_safe:
            return self._encode_text(prompt)
        with self._lock:
            return self._encode_text(prompt)


def _chunk_starts(total: int, chunk: int, hop: int) -> list[int]:
    starts = list(range(0, max(total - chunk, 0) + 1, hop))
    if starts[-1] + chunk < total:
        starts.append(total - chunk)
    return starts


def embed_audio(backend: EncoderBackend, buf: AudioBuffer) -> Embedding:
    """Embed a buffer, handling resampling and long-input chunking.

    Buffers longer than the backend's receptive field are embedded as
    ``max_duration`` chunks with 50% overlap; chunk vectors are averaged
    and renormalized.
    """
    if KIND_AUDIO not in backend.capabilities:
        raise UnsupportedModalityError(f"backend {backend.name!r} cannot embed audio")
    if backend.sample_rate is not None:
        buf = audio_mod.resample(buf, backend.sample_rate)

    samples = buf.samples
    try:
        if backend.max_duration is None or buf.duration_seconds <= backend.max_duration:
            raw = backend.encode_audio(samples, buf.sample_rate)
            return Embedding.from_raw(raw, KIND_AUDIO)
        chunk = int(round(backend.max_duration * buf.sample_rate))
        vectors = []
        for start in _chunk_starts(len(samples), chunk, max(chunk // 2, 1)):
            raw = backend.encode_audio(samples[start:start + chunk], buf.sample_rate)
            vectors.append(Embedding.from_raw(raw, KIND_AUDIO).vector.astype(np.float64))
    except BackendFailureError:
        raise
    except Exception as exc:
        raise BackendFailureError(f"{backend.name}: audio inference failed: {exc}") from exc
    return Embedding.from_raw(np.mean(vectors, axis=0), KIND_AUDIO)


def normalize_prompt(prompt: str) -> str:
    return prompt.strip()


def embed_text(backend: EncoderBackend, prompt: str) -> Embedding:
    if KIND_TEXT not in backend.capabilities:
        raise UnsupportedModalityError(f"backend {backend.name!r} cannot embed text")
    normalized = normalize_prompt(prompt)
    if not normalized:
        raise EmptyPromptError("prompt is empty")
    try:
        raw = backend.encode_text(normalized)
    except BackendFailureError:
        raise
    except Exception as exc:
        raise BackendFailureError(f"{backend.name}: text inference failed: {exc}") from exc
    return Embedding.from_raw(raw, KIND_TEXT)


def audio_cache_key(backend: EncoderBackend, buf: AudioBuffer) -> str:
    """Content hash of (backend identity, modality, PCM bytes, rate)."""
    h = hashlib.sha256()
    h.update(b"cratedig-embedding\x00")
    h.update(backend.name.encode())
    h.update(b"\x00")
    h.update(backend.version.encode())
    h.update(b"\x00audio\x00")
    h.update(int(buf.sample_rate).to_bytes(4, "little"))
    h.update(np.ascontiguousarray(buf.samples, dtype="<f4").tobytes())
    return h.hexdigest()


def text_cache_key(backend: EncoderBackend, prompt: str) -> str:
    h = hashlib.sha256()
    h.update(b"cratedig-embedding\x00")
    h.update(backend.name.encode())
    h.update(b"\x00")
    h.update(backend.version.encode())
    h.update(b"\x00text\x00")
    h.update(normalize_prompt(prompt).encode("utf-8"))
    return h.hexdigest()


from .cache import EmbeddingCache  # noqa: E402
from .mock import MockBackend  # noqa: E402
from .precomputed import PrecomputedBackend  # noqa: E402

__all__ = [
    "Embedding", "EncoderBackend", "EmbeddingCache", "MockBackend",
    "PrecomputedBackend", "embed_audio", "embed_text",
    "audio_cache_key", "text_cache_key", "normalize_prompt",
    "KIND_AUDIO", "KIND_TEXT",
]
