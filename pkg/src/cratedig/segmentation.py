"""Boundary snapping and duration-constrained segment cutting.

Boundaries move to nearby speech-activity onsets (cleaner slice points),
then consecutive boundary pairs become segments, repaired so every piece
sits inside the configured duration band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .activity import Window
from .boundaries import SOURCE_SNAPPED, BoundarySet


@dataclass(frozen=True)
class Segment:
    """One cut region of a song.  Segments of a song tile [0, duration]."""

    song_id: str
    index: int
    start: float
    end: float
    snapped: bool = False
    non_music: bool = False

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"segment [{self.start}, {self.end}) is empty")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SegmentConfig:
    snap_tolerance_seconds: float = 2.0
    min_segment_seconds: float = 4.0
    max_segment_seconds: float = 30.0

    def __post_init__(self):
        if not 0.0 < self.min_segment_seconds < self.max_segment_seconds:
            raise ValueError("require 0 < min_segment_seconds < max_segment_seconds")
        if self.snap_tolerance_seconds < 0:
            raise ValueError("snap_tolerance_seconds must be >= 0")


def speech_onsets(speech: list[Window]) -> list[float]:
    """Sorted start times of the speech windows."""
    return sorted(w.start for w in speech)


def snap_boundaries(b: BoundarySet, onsets: list[float],
                    tolerance: float) -> BoundarySet:
    """Move each interior boundary to its nearest onset within tolerance.

    Distance ties break toward the earlier onset; endpoints never move;
    boundaries that land on the same time collapse to one.  Idempotent:
    a boundary already on an onset re-snaps to itself.
    """
    onsets = sorted(float(t) for t in onsets)
    snapped_times = set(b.snapped_times)
    out = []
    for t in b.interior:
        best = None
        if onsets:
            gaps = [abs(o - t) for o in onsets]
            lo = min(gaps)
            if lo <= tolerance:
                best = onsets[gaps.index(lo)]  # index() takes the earlier tie
        if best is None:
            out.append(t)
        else:
            out.append(best)
            snapped_times.add(best)
    new = BoundarySet.build(out, b.song_duration, SOURCE_SNAPPED)
    kept = frozenset(t for t in snapped_times if t in new.times)
    return BoundarySet(new.times, new.song_duration, SOURCE_SNAPPED, kept)


def cut_segments(duration: float, b: BoundarySet, cfg: SegmentConfig,
                 song_id: str = "") -> list[Segment]:
    """Boundary pairs -> segments inside [min, max] seconds.

    Left-to-right repair: a too-short segment merges into its right
    neighbor (into the left one if it is last); a too-long segment splits
    into equal parts.  A whole song shorter than the minimum stays one
    segment.
    """
    raw = list(zip(b.times, b.times[1:]))
    pieces: list[tuple[float, float]] = []
    i = 0
    while i < len(raw):
        start, end = raw[i]
        while end - start < cfg.min_segment_seconds and i + 1 < len(raw):
            i += 1
            end = raw[i][1]
        if end - start < cfg.min_segment_seconds and pieces:
            start = pieces.pop()[0]
        if end - start > cfg.max_segment_seconds:
            parts = math.ceil((end - start) / cfg.max_segment_seconds)
            edges = np.linspace(start, end, parts + 1)
            pieces.extend(zip(edges[:-1], edges[1:]))
        else:
            pieces.append((start, end))
        i += 1

    snapped = b.snapped_times
    return [
        Segment(song_id, idx, float(start), float(end), snapped=start in snapped)
        for idx, (start, end) in enumerate(pieces)
    ]
