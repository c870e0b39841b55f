"""Frame-level log-mel features and self-similarity matrices.

These feed structural boundary detection.  Defaults (22.05 kHz, 2048-sample
frames, 512-sample hop, 64 mel bands) give a ~23 ms hop, comfortably below
the one-second boundary tolerance used downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import audio as audio_mod
from .audio import AudioBuffer
from .errors import TooFewFramesError, TooShortError


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 22050
    frame_size: int = 2048
    hop_size: int = 512
    n_mels: int = 64
    log_floor: float = 1e-6

    def __post_init__(self):
        if not (self.frame_size >= self.hop_size > 0):
            raise ValueError("require frame_size >= hop_size > 0")
        if self.n_mels <= 0:
            raise ValueError("n_mels must be positive")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def frames_per_second(self) -> float:
        return self.sample_rate / self.hop_size


@dataclass(frozen=True)
class FeatureMatrix:
    """T x F matrix with per-frame center timestamps."""

    frames: np.ndarray
    frame_times: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        times = np.asarray(self.frame_times, dtype=np.float64)
        if frames.shape[0] != times.shape[0]:
            raise ValueError("frames and frame_times disagree on T")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("frame_times must be strictly increasing")
        if not np.all(np.isfinite(frames)):
            raise ValueError("non-finite feature values")
        frames.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_times", times)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class SSM:
    """Pairwise cosine-similarity matrix over feature frames."""

    matrix: np.ndarray
    frame_times: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("SSM must be square")
        if m.shape[0] != len(self.frame_times):
            raise ValueError("SSM size and frame_times disagree")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "frame_times", np.asarray(self.frame_times, dtype=np.float64))


def hz_to_mel(hz):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """Triangular HTK-style filters, shape (n_mels, n_fft // 2 + 1).

    Filters peak at 1.0 on mel-spaced centers between 0 Hz and Nyquist.
    """
    n_bins = n_fft // 2 + 1
    bin_freqs = np.arange(n_bins) * sample_rate / n_fft
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_points = mel_to_hz(mel_points)

    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, ctr, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - lo) / max(ctr - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - ctr, 1e-12)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def frame_signal(samples: np.ndarray, frame_size: int, hop_size: int) -> np.ndarray:
    """Complete frames only: T = 1 + floor((len - frame) / hop), no padding."""
    if len(samples) < frame_size:
        raise TooShortError(
            f"need at least {frame_size} samples for one frame, got {len(samples)}"
        )
    return sliding_window_view(samples, frame_size)[::hop_size]


def log_mel_features(buf: AudioBuffer, cfg: FeatureConfig) -> FeatureMatrix:
    """Magnitude STFT -> HTK mel filterbank -> log(x + floor).

    The buffer is resampled to ``cfg.sample_rate`` first when rates differ.
    Frames are Hann-windowed with no padding, so a constant signal yields
    bit-identical frames throughout.  Output rows are raw log-mel vectors;
    cosine comparisons downstream are scale-invariant, and
    :func:`self_similarity` L2-normalizes per frame before taking products.
    """
    buf = audio_mod.resample(buf, cfg.sample_rate)
    frames = frame_signal(buf.samples.astype(np.float64), cfg.frame_size, cfg.hop_size)
    window = np.hanning(cfg.frame_size + 1)[:-1]  # periodic Hann
    spectra = np.abs(np.fft.rfft(frames * window, axis=1))
    fb = mel_filterbank(cfg.sample_rate, cfg.frame_size, cfg.n_mels)
    mel = spectra @ fb.T
    feats = np.log(mel + cfg.log_floor)

    n = frames.shape[0]
    times = (np.arange(n) * cfg.hop_size + cfg.frame_size / 2.0) / cfg.sample_rate
    return FeatureMatrix(feats, times)


def normalize_frames(frames: np.ndarray) -> np.ndarray:
    """Per-frame L2 normalization; zero-norm frames stay zero."""
    norms = np.linalg.norm(frames, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return frames / safe


def self_similarity(feat: FeatureMatrix) -> SSM:
    """Cosine similarity between every pair of frames.

    Zero-norm frames score 0 against everything and 1 against themselves.
    """
    if feat.n_frames < 2:
        raise TooFewFramesError(f"need at least 2 frames, got {feat.n_frames}")
    unit = normalize_frames(feat.frames)
    m = np.clip(unit @ unit.T, -1.0, 1.0)
    zero = np.linalg.norm(feat.frames, axis=1) == 0.0
    if np.any(zero):
        idx = np.where(zero)[0]
        m[idx, :] = 0.0
        m[:, idx] = 0.0
        m[idx, idx] = 1.0
    return SSM(m, feat.frame_times)
