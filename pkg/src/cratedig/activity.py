"""Speech and music activity: CSV import, heuristic detection, windowing.

CSV import is the first-class path for plugging in an external detector's
output.  The built-in heuristic is a best-effort fallback: speech presence
is read from syllable-rate (2-8 Hz) energy modulation, music presence from
tonal (low-spectral-flatness) energy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import butter, sosfiltfilt

from . import audio as audio_mod
from .audio import AudioBuffer
from .errors import CsvParseError, NonMonotonicTimeError, TooShortError, UnknownLabelError
from .features import FeatureConfig, frame_signal

LABEL_SPEECH = "speech"
LABEL_MUSIC = "music"

FRAME_CSV_HEADER = ["time", "speech", "music"]
WINDOW_CSV_HEADER = ["start_time", "end_time", "label"]


@dataclass(frozen=True)
class ActivityTimeline:
    """Per-frame speech/music scores in [0, 1] on a shared time grid."""

    frame_times: np.ndarray
    speech_scores: np.ndarray
    music_scores: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.frame_times, dtype=np.float64)
        speech = np.asarray(self.speech_scores, dtype=np.float64)
        music = np.asarray(self.music_scores, dtype=np.float64)
        if not (len(times) == len(speech) == len(music)):
            raise ValueError("timeline arrays disagree on length")
        if len(times) == 0:
            raise ValueError("timeline must be nonempty")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise NonMonotonicTimeError("frame times must be strictly increasing")
        for name, arr in (("speech", speech), ("music", music)):
            if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError(f"{name} scores must lie in [0, 1]")
        for arr in (times, speech, music):
            arr.setflags(write=False)
        object.__setattr__(self, "frame_times", times)
        object.__setattr__(self, "speech_scores", speech)
        object.__setattr__(self, "music_scores", music)

    def __len__(self) -> int:
        return len(self.frame_times)


@dataclass(frozen=True, order=True)
class Window:
    start: float
    end: float
    label: str

    def __post_init__(self):
        if not 0.0 <= self.start < self.end:
            raise ValueError(f"require 0 <= start < end, got [{self.start}, {self.end})")
        if self.label not in (LABEL_SPEECH, LABEL_MUSIC):
            raise UnknownLabelError(f"unknown label {self.label!r}")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ActivityConfig:
    speech_threshold: float = 0.5
    music_threshold: float = 0.5
    min_window_seconds: float = 0.5
    merge_gap_seconds: float = 1.0

    def __post_init__(self):
        for name in ("speech_threshold", "music_threshold"):
            t = getattr(self, name)
            if not 0.0 < t < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        for name in ("min_window_seconds", "merge_gap_seconds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def import_activity_csv(path: str | Path) -> ActivityTimeline | list[Window]:
    """Read either accepted schema.

    ``time,speech,music`` rows become an :class:`ActivityTimeline`;
    ``start_time,end_time,label`` rows become a validated window list that
    bypasses binarization downstream.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8-sig", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise CsvParseError("empty activity CSV", row=1)
    header = [c.strip() for c in rows[0]]
    if header == FRAME_CSV_HEADER:
        times, speech, music = [], [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise CsvParseError(f"expected 3 columns, got {len(row)}", row=lineno)
            try:
                t, s, m = (float(c) for c in row)
            except ValueError:
                raise CsvParseError(f"not numeric: {row!r}", row=lineno) from None
            if times and t <= times[-1]:
                raise NonMonotonicTimeError(f"time {t} not after {times[-1]}", row=lineno)
            if not (0.0 <= s <= 1.0 and 0.0 <= m <= 1.0):
                raise CsvParseError(f"scores outside [0, 1]: {row!r}", row=lineno)
            times.append(t)
            speech.append(s)
            music.append(m)
        if not times:
            raise CsvParseError("frame-schema CSV has no rows", row=1)
        return ActivityTimeline(np.array(times), np.array(speech), np.array(music))
    if header == WINDOW_CSV_HEADER:
        windows = []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise CsvParseError(f"expected 3 columns, got {len(row)}", row=lineno)
            try:
                start, end = float(row[0]), float(row[1])
            except ValueError:
                raise CsvParseError(f"not numeric: {row[:2]!r}", row=lineno) from None
            label = row[2].strip()
            if label not in (LABEL_SPEECH, LABEL_MUSIC):
                raise UnknownLabelError(f"unknown label {label!r}", row=lineno)
            if not 0.0 <= start < end:
                raise CsvParseError(f"bad window [{start}, {end})", row=lineno)
            windows.append(Window(start, end, label))
        return sorted(windows)
    raise CsvParseError(
        f"unrecognized header {rows[0]!r}; expected {FRAME_CSV_HEADER} or {WINDOW_CSV_HEADER}",
        row=1,
    )


def export_activity_csv(timeline: ActivityTimeline | None, path: str | Path) -> None:
    """Write the frame schema (header-only when no timeline exists)."""
    lines = [",".join(FRAME_CSV_HEADER)]
    if timeline is not None:
        for t, s, m in zip(timeline.frame_times, timeline.speech_scores,
                           timeline.music_scores):
            lines.append(f"{t:.6f},{s:.6f},{m:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    return uniform_filter1d(x, size=max(1, width), mode="nearest")


def heuristic_activity(buf: AudioBuffer, cfg: FeatureConfig) -> ActivityTimeline:
    """Best-effort frame-level speech and music scores.

    Speech: fraction of the energy envelope's modulation power that falls
    in the 2-8 Hz syllable band.  Music: spectral-flatness-weighted energy
    (tonal frames with high energy score high).  Both are smoothed with a
    one-second moving average and clamped to [0, 1].
    """
    if buf.duration_seconds < 1.0:
        raise TooShortError(f"need >= 1 s of audio, got {buf.duration_seconds:.3f} s")
    buf = audio_mod.resample(buf, cfg.sample_rate)
    frames = frame_signal(buf.samples.astype(np.float64), cfg.frame_size, cfg.hop_size)
    window = np.hanning(cfg.frame_size + 1)[:-1]
    power = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2

    n = frames.shape[0]
    times = (np.arange(n) * cfg.hop_size + cfg.frame_size / 2.0) / cfg.sample_rate
    env_fps = cfg.sample_rate / cfg.hop_size
    smooth_frames = int(round(env_fps))

    env = np.sqrt(power.sum(axis=1))
    env_peak = env.max()
    if env_peak == 0.0:
        zeros = np.zeros(n)
        return ActivityTimeline(times, zeros, zeros)

    # Speech: band energy fraction of the detrended envelope.
    detrended = env - _moving_average(env, smooth_frames)
    hi = min(8.0, 0.45 * env_fps)
    sos = butter(2, [2.0, hi], btype="bandpass", fs=env_fps, output="sos")
    banded = sosfiltfilt(sos, env) if n > 15 else np.zeros(n)
    band_power = _moving_average(banded ** 2, smooth_frames)
    total_power = _moving_average(detrended ** 2, smooth_frames)
    speech = band_power / (total_power + 1e-12 * env_peak ** 2)

    # Music: tonality (1 - spectral flatness) weighted by relative energy.
    spec = power[:, 1:]  # DC bin excluded
    eps = 1e-12 * max(power.max(), 1e-30)
    flatness = np.exp(np.mean(np.log(spec + eps), axis=1)) / (np.mean(spec, axis=1) + eps)
    music = (1.0 - flatness) * (env / env_peak)

    speech = np.clip(_moving_average(speech, smooth_frames), 0.0, 1.0)
    music = np.clip(_moving_average(music, smooth_frames), 0.0, 1.0)
    return ActivityTimeline(times, speech, music)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, stop) index runs of True."""
    if not mask.any():
        return []
    padded = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.where(padded == 1)[0]
    stops = np.where(padded == -1)[0]
    return list(zip(starts, stops))


def _windows_for_label(times: np.ndarray, scores: np.ndarray, threshold: float,
                       min_window: float, merge_gap: float, label: str) -> list[Window]:
    if len(times) > 1:
        step = float(times[-1] - times[-2])
    else:
        step = 0.0
    spans = []
    for i, j in _runs(scores >= threshold):
        start = float(times[i])
        end = float(times[j]) if j < len(times) else float(times[-1]) + step
        spans.append((start, end))

    merged: list[list[float]] = []
    for start, end in spans:
        if merged and start - merged[-1][1] < merge_gap:
            merged[-1][1] = end
        else:
            merged.append([start, end])
    return [Window(s, e, label) for s, e in merged if e - s >= min_window]


def binarize_and_merge(tl: ActivityTimeline,
                       cfg: ActivityConfig) -> tuple[list[Window], list[Window]]:
    """Threshold each score track into maximal disjoint windows.

    Per label: frames at or above the threshold form runs; runs separated
    by gaps shorter than ``merge_gap_seconds`` merge; merged runs shorter
    than ``min_window_seconds`` are dropped.  Speech and music windows may
    overlap each other (sung vocals over instrumentals are both).
    """
    speech = _windows_for_label(tl.frame_times, tl.speech_scores, cfg.speech_threshold,
                                cfg.min_window_seconds, cfg.merge_gap_seconds, LABEL_SPEECH)
    music = _windows_for_label(tl.frame_times, tl.music_scores, cfg.music_threshold,
                               cfg.min_window_seconds, cfg.merge_gap_seconds, LABEL_MUSIC)
    return speech, music


def windows_to_timeline(windows: list[Window], frame_times: np.ndarray,
                        label: str) -> np.ndarray:
    """Step-function scores (1 inside a window, 0 outside) on a frame grid."""
    scores = np.zeros(len(frame_times))
    for w in windows:
        if w.label == label:
            scores[(frame_times >= w.start) & (frame_times < w.end)] = 1.0
    return scores
