"""Audio decoding, resampling, slicing and WAV export.

All processing runs on mono float32 PCM held in :class:`AudioBuffer`.
Multi-channel inputs are averaged down to mono at decode time; WAV export
is fixed at 16-bit PCM for DJ-software compatibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .codecs import flac as _flac
from .codecs import riff as _riff
from .errors import (
    CorruptStreamError,
    InvalidRateError,
    RangeOutOfBoundsError,
    UnsupportedFormatError,
)

SUPPORTED_EXTENSIONS = (".wav", ".flac", ".mp3", ".ogg")

# Quantization step of the 16-bit export; decode uses the same symmetric
# scale so export -> decode round-trips within one step.
_PCM16_SCALE = 32767.0


@dataclass(frozen=True)
class AudioBuffer:
    """Mono PCM signal.  Samples are float32, nominally in [-1, 1].

    Buffers are immutable after creation (the sample array is marked
    read-only) and safe to share across worker threads.
    """

    samples: np.ndarray
    sample_rate: int
    source_path: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise InvalidRateError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 1:
            raise ValueError(f"expected mono 1-D samples, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or infinity")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


def _downmix(channels: np.ndarray) -> np.ndarray:
    """Average an (n, channels) float array to mono."""
    if channels.ndim == 1:
        return channels
    return channels.mean(axis=1)


def decode(path: str | Path) -> AudioBuffer:
    """Decode an audio file to a mono buffer at its native sample rate.

    WAV and FLAC are decoded natively.  MP3/OGG are recognized but need an
    external decoder, so they raise :class:`UnsupportedFormatError` with a
    hint; a damaged file of a supported format raises
    :class:`CorruptStreamError` and any partial decode is discarded.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    head = path.open("rb").read(12)

    if head[:4] == b"RIFF" and head[8:12] == b"WAVE":
        data, rate = _riff.read_wav(path)
    elif head[:4] == b"fLaC":
        data, rate = _flac.read_flac(path)
    elif head[:3] == b"ID3" or (len(head) >= 2 and head[0] == 0xFF and (head[1] & 0xE0) == 0xE0):
        raise UnsupportedFormatError(
            f"{path.name}: MP3 decoding is not built in; convert to WAV or FLAC first"
        )
    elif head[:4] == b"OggS":
        raise UnsupportedFormatError(
            f"{path.name}: OGG decoding is not built in; convert to WAV or FLAC first"
        )
    elif path.suffix.lower() in (".wav", ".flac"):
        # Claims a supported format but the magic is gone: damaged file.
        raise CorruptStreamError(f"{path.name}: not a valid {path.suffix[1:].upper()} stream")
    else:
        raise UnsupportedFormatError(f"{path.name}: unrecognized container")

    mono = np.clip(_downmix(data), -1.0, 1.0).astype(np.float32)
    return AudioBuffer(mono, rate, source_path=str(path))


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Polyphase resample to ``target_rate``.  Identity when rates match."""
    if int(target_rate) <= 0:
        raise InvalidRateError(f"target_rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == buf.sample_rate:
        return buf
    if len(buf) == 0:
        return AudioBuffer(np.zeros(0, dtype=np.float32), target_rate, buf.source_path)
    g = math.gcd(target_rate, buf.sample_rate)
    up, down = target_rate // g, buf.sample_rate // g
    out = resample_poly(buf.samples.astype(np.float64), up, down)
    return AudioBuffer(out.astype(np.float32), target_rate, buf.source_path)


def slice_buffer(buf: AudioBuffer, start_s: float, end_s: float) -> AudioBuffer:
    """Sample-accurate cut of ``[start_s, end_s)``.

    Bounds must satisfy 0 <= start < end <= duration (half a sample of
    float tolerance is allowed at the ends).
    """
    rate = buf.sample_rate
    tol = 0.5 / rate
    if not (0.0 <= start_s + tol and start_s < end_s and end_s <= buf.duration_seconds + tol):
        raise RangeOutOfBoundsError(
            f"slice [{start_s}, {end_s}) outside [0, {buf.duration_seconds:.6f}]"
        )
    i0 = max(0, int(round(start_s * rate)))
    i1 = min(len(buf), int(round(end_s * rate)))
    return AudioBuffer(buf.samples[i0:i1].copy(), rate, buf.source_path)


def export_wav(buf: AudioBuffer, path: str | Path) -> None:
    """Write a canonical 44-byte-header RIFF/WAVE PCM16 mono file.

    Out-of-range samples clip to full scale instead of wrapping.
    """
    q = np.clip(np.round(buf.samples * _PCM16_SCALE), -32768, 32767).astype("<i2")
    _riff.write_wav_pcm16(Path(path), q, buf.sample_rate)


def export_wav_bytes(buf: AudioBuffer) -> bytes:
    """Same encoding as :func:`export_wav`, returned in memory."""
    q = np.clip(np.round(buf.samples * _PCM16_SCALE), -32768, 32767).astype("<i2")
    return _riff.wav_pcm16_bytes(q, buf.sample_rate)
