"""Deterministic test backend with no model weights.

Inputs are reduced to a canonical token, and the token seeds a fixed
pseudo-random unit vector.  Dominantly tonal audio maps to the token
``tone:<hz>``, so a sine at 440 Hz and the prompt "tone:440" land on the
same vector.  That gives fixtures a controllable geometry: planted
content scores cosine ~1.0 against its matching prompt and near 0
against everything else (random high-dimensional vectors are nearly
orthogonal).
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import KIND_AUDIO, KIND_TEXT, EncoderBackend

_TONE_WINDOW_SECONDS = 5.0
_PEAK_ENERGY_FRACTION = 0.5
_PEAK_HALF_WIDTH = 3


def tone_token(samples: np.ndarray, rate: int) -> str | None:
    """Canonical token for dominantly tonal audio, else None.

    The dominant frequency comes from a Hann-windowed FFT peak with
    parabolic interpolation, rounded to the nearest hertz.  Audio counts
    as tonal when the peak neighborhood holds at least half the non-DC
    spectral energy.
    """
    x = np.asarray(samples, dtype=np.float64)
    x = x[: int(_TONE_WINDOW_SECONDS * rate)]
    if x.size < 256 or not np.any(x):
        return None
    windowed = x * np.hanning(x.size)
    power = np.abs(np.fft.rfft(windowed)) ** 2
    power[0] = 0.0
    total = power.sum()
    if total <= 0.0:
        return None
    k = int(np.argmax(power))
    lo = max(k - _PEAK_HALF_WIDTH, 0)
    hi = min(k + _PEAK_HALF_WIDTH + 1, power.size)
    if power[lo:hi].sum() / total < _PEAK_ENERGY_FRACTION:
        return None
    if 0 < k < power.size - 1 and power[k] > 0:
        mags = np.log(power[k - 1:k + 2] + 1e-300)
        denom = mags[0] - 2.0 * mags[1] + mags[2]
        delta = 0.5 * (mags[0] - mags[2]) / denom if denom != 0 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
    else:
        delta = 0.0
    freq = (k + delta) * rate / x.size
    return f"tone:{int(round(freq))}"


class MockBackend(EncoderBackend):
    """Hash-seeded deterministic encoder for tests and demos.

    ``fixed_audio_token`` forces every audio input onto one token, which
    makes audio embeddings content-invariant (useful for checking that
    pipelines treat equal embeddings equally).
    """

    name = "mock"
    version = "1"
    capabilities = frozenset({KIND_AUDIO, KIND_TEXT})
    thread_safe = True

    def __init__(self, dim: int = 512, sample_rate: int | None = None,
                 max_duration: float | None = None,
                 fixed_audio_token: str | None = None):
        super().__init__()
        if dim < 8:
            raise ValueError(f"mock dim must be >= 8, got {dim}")
        self.dim = int(dim)
        self.sample_rate = sample_rate
        self.max_duration = max_duration
        self.fixed_audio_token = fixed_audio_token

    def _vector_for_token(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        seed = int.from_bytes(digest, "little")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)

    def audio_token(self, samples: np.ndarray, rate: int) -> str:
        if self.fixed_audio_token is not None:
            return self.fixed_audio_token
        token = tone_token(samples, rate)
        if token is not None:
            return token
        raw = np.ascontiguousarray(samples, dtype="<f4").tobytes()
        return f"pcm:{hashlib.sha256(raw).hexdigest()}:{rate}"

    def _encode_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        return self._vector_for_token(self.audio_token(samples, rate))

    def _encode_text(self, prompt: str) -> np.ndarray:
        return self._vector_for_token(prompt)
