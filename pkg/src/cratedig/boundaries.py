"""Structural boundary detection: checkerboard novelty plus peak picking.

Stands in for a full structure-analysis framework; external boundary CSVs
can be imported instead and flow through the same :class:`BoundarySet`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d, median_filter

from .audio import AudioBuffer
from .errors import CsvParseError, KernelTooLargeError, TooShortError
from .features import SSM, FeatureConfig, log_mel_features, normalize_frames

SOURCE_NOVELTY = "novelty"
SOURCE_IMPORTED = "imported"
SOURCE_SNAPPED = "snapped"

BOUNDARY_CSV_HEADER = "boundary_time"


@dataclass(frozen=True)
class BoundarySet:
    """Ordered boundary times tiling one song: 0.0 first, duration last.

    ``snapped_times`` records which interior boundaries sit on a speech
    onset after snapping; it is bookkeeping for segment flags and plot
    export, not part of equality between sets.
    """

    times: tuple[float, ...]
    song_duration: float
    source: str
    snapped_times: frozenset[float] = field(default_factory=frozenset, compare=False)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if self.song_duration <= 0:
            raise ValueError("song_duration must be positive")
        if len(times) < 2 or times[0] != 0.0 or times[-1] != self.song_duration:
            raise ValueError("boundaries must start at 0.0 and end at song_duration")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("boundary times must be strictly increasing")
        if self.source not in (SOURCE_NOVELTY, SOURCE_IMPORTED, SOURCE_SNAPPED):
            raise ValueError(f"unknown boundary source {self.source!r}")
        object.__setattr__(self, "times", times)

    @classmethod
    def build(cls, times, song_duration: float, source: str,
              snapped_times=frozenset()) -> "BoundarySet":
        """Clamp into [0, duration], sort, dedupe, and ensure endpoints."""
        duration = float(song_duration)
        cleaned = {min(max(float(t), 0.0), duration) for t in times}
        cleaned.update((0.0, duration))
        return cls(tuple(sorted(cleaned)), duration, source, frozenset(snapped_times))

    @property
    def interior(self) -> tuple[float, ...]:
        return self.times[1:-1]


@dataclass(frozen=True)
class NoveltyCurve:
    values: np.ndarray
    frame_times: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        times = np.asarray(self.frame_times, dtype=np.float64)
        if values.shape != times.shape:
            raise ValueError("values and frame_times disagree on length")
        if values.size and values.min() < 0:
            raise ValueError("novelty values must be nonnegative")
        values.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "frame_times", times)


@dataclass(frozen=True)
class BoundaryConfig:
    kernel_seconds: float = 8.0
    peak_median_window_seconds: float = 16.0
    peak_offset: float = 0.05
    min_separation_seconds: float = 8.0

    def __post_init__(self):
        for name in ("kernel_seconds", "peak_median_window_seconds",
                     "peak_offset", "min_separation_seconds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _frames_per_second(frame_times: np.ndarray) -> float:
    if len(frame_times) < 2:
        raise ValueError(f"cannot infer frame rate from {len(frame_times)} frame times")
    return 1.0 / float(np.median(np.diff(frame_times)))


def _kernel_frames(kernel_seconds: float, fps: float, n_frames: int) -> int:
    kf = max(3, int(round(kernel_seconds * fps)))
    if kf % 2 == 0:
        kf += 1
    if kf > n_frames:
        raise KernelTooLargeError(
            f"kernel of {kf} frames exceeds {n_frames} available frames"
        )
    return kf


def _checkerboard_taper(kernel_frames: int) -> np.ndarray:
    """Signed 1-D Gaussian taper h: the checkerboard kernel is h outer h."""
    half = kernel_frames // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    sigma = kernel_frames / 3.0
    return np.sign(offsets) * np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))


def _finalize_curve(raw: np.ndarray, frame_times: np.ndarray) -> NoveltyCurve:
    values = np.maximum(raw, 0.0)
    peak = values.max() if values.size else 0.0
    if peak > 0:
        values = values / peak
    return NoveltyCurve(values, frame_times)


def novelty_curve(ssm: SSM, kernel_seconds: float) -> NoveltyCurve:
    """Correlate the Gaussian checkerboard kernel along the SSM diagonal.

    Out-of-range kernel taps contribute zero; negative sums clamp to zero
    and the curve is max-normalized when any novelty is present.
    """
    n = ssm.matrix.shape[0]
    fps = _frames_per_second(ssm.frame_times)
    kf = _kernel_frames(kernel_seconds, fps, n)
    taper = _checkerboard_taper(kf)
    # Separable kernel: correlate rows with h, then columns, take diagonal.
    rows = correlate1d(ssm.matrix, taper, axis=1, mode="constant", cval=0.0)
    both = correlate1d(rows, taper, axis=0, mode="constant", cval=0.0)
    return _finalize_curve(np.diagonal(both).copy(), ssm.frame_times)


def novelty_from_features(frames: np.ndarray, frame_times: np.ndarray,
                          kernel_seconds: float) -> NoveltyCurve:
    """Novelty without materializing the SSM.

    For unit-normalized frames F the SSM is the Gram matrix F F^T, and the
    separable checkerboard correlation collapses to ||correlate(F, h)||^2
    per frame.  Identical to :func:`novelty_curve` on the same features (up
    to float rounding) while staying O(T * dim) in memory.
    """
    fps = _frames_per_second(frame_times)
    kf = _kernel_frames(kernel_seconds, fps, len(frame_times))
    taper = _checkerboard_taper(kf)
    unit = normalize_frames(np.asarray(frames, dtype=np.float64))
    filtered = correlate1d(unit, taper, axis=0, mode="constant", cval=0.0)
    return _finalize_curve(np.sum(filtered ** 2, axis=1), frame_times)


def pick_peaks(nc: NoveltyCurve, cfg: BoundaryConfig, song_duration: float) -> BoundarySet:
    """Local maxima above a sliding-median threshold, greedily deduplicated.

    Peaks closer than ``min_separation_seconds`` keep only the larger
    (ties keep the earlier).  Endpoints 0.0 and ``song_duration`` are
    always part of the result.
    """
    values = nc.values
    times = nc.frame_times
    kept: list[float] = []
    if values.size >= 3:
        fps = _frames_per_second(times)
        win = max(1, int(round(cfg.peak_median_window_seconds * fps)))
        threshold = median_filter(values, size=win, mode="nearest") + cfg.peak_offset
        idx = [
            i for i in range(1, len(values) - 1)
            if values[i - 1] < values[i] >= values[i + 1] and values[i] > threshold[i]
        ]
        for i in sorted(idx, key=lambda i: (-values[i], times[i])):
            t = float(times[i])
            if all(abs(t - k) >= cfg.min_separation_seconds for k in kept):
                kept.append(t)
    interior = [t for t in kept if 0.0 < t < song_duration]
    return BoundarySet.build(interior, song_duration, SOURCE_NOVELTY)


def detect_boundaries(buf: AudioBuffer, feat_cfg: FeatureConfig,
                      bound_cfg: BoundaryConfig) -> BoundarySet:
    """Full detector: log-mel -> cosine self-similarity -> novelty -> peaks."""
    if buf.duration_seconds < 2.0 * bound_cfg.kernel_seconds:
        raise TooShortError(
            f"need at least {2 * bound_cfg.kernel_seconds:.1f} s of audio, "
            f"got {buf.duration_seconds:.2f} s"
        )
    feat = log_mel_features(buf, feat_cfg)
    nc = novelty_from_features(feat.frames, feat.frame_times, bound_cfg.kernel_seconds)
    return pick_peaks(nc, bound_cfg, buf.duration_seconds)


def import_boundaries_csv(path: str | Path, song_duration: float) -> BoundarySet:
    """Read a one-column ``boundary_time`` CSV into a BoundarySet.

    Times are sorted, deduplicated and clamped into [0, duration]; an empty
    file yields just the endpoints.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8-sig", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        return BoundarySet.build([], song_duration, SOURCE_IMPORTED)
    header = [c.strip() for c in rows[0]]
    if header != [BOUNDARY_CSV_HEADER]:
        raise CsvParseError(f"expected header {BOUNDARY_CSV_HEADER!r}, got {rows[0]!r}", row=1)
    times = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 1:
            raise CsvParseError(f"expected one column, got {len(row)}", row=lineno)
        try:
            t = float(row[0])
        except ValueError:
            raise CsvParseError(f"not a number: {row[0]!r}", row=lineno) from None
        if not np.isfinite(t):
            raise CsvParseError(f"non-finite boundary time: {row[0]!r}", row=lineno)
        times.append(t)
    return BoundarySet.build(times, song_duration, SOURCE_IMPORTED)


def export_boundaries_csv(bounds: BoundarySet, path: str | Path) -> None:
    """Write the import schema back out (UTF-8, LF, float seconds)."""
    lines = [BOUNDARY_CSV_HEADER]
    lines += [f"{t:.6f}" for t in bounds.times]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
