"""Boundary snapping and duration-constrained cutting."""

import numpy as np
import pytest

from cratedig.activity import Window
from cratedig.boundaries import SOURCE_NOVELTY, SOURCE_SNAPPED, BoundarySet
from cratedig.segmentation import (
    Segment,
    SegmentConfig,
    cut_segments,
    snap_boundaries,
    speech_onsets,
)


def bset(interior, duration=60.0):
    return BoundarySet.build(interior, duration, SOURCE_NOVELTY)


# ---------------------------------------------------------------- dataclasses


def test_segment_rejects_empty_interval():
    with pytest.raises(ValueError):
        Segment("s", 0, 5.0, 5.0)
    with pytest.raises(ValueError):
        Segment("s", 0, 6.0, 5.0)
    seg = Segment("s", 3, 1.5, 4.0)
    assert seg.duration == pytest.approx(2.5)


def test_segment_config_validation():
    with pytest.raises(ValueError):
        SegmentConfig(min_segment_seconds=10.0, max_segment_seconds=5.0)
    with pytest.raises(ValueError):
        SegmentConfig(min_segment_seconds=0.0)
    with pytest.raises(ValueError):
        SegmentConfig(snap_tolerance_seconds=-1.0)


def test_speech_onsets_sorted_starts():
    windows = [Window(10.0, 12.0, "speech"), Window(2.0, 4.0, "speech")]
    assert speech_onsets(windows) == [2.0, 10.0]


# ------------------------------------------------------------------- snapping


def test_snap_moves_within_tolerance_only():
    b = bset([10.0, 30.0])
    snapped = snap_boundaries(b, [11.0, 45.0], tolerance=2.0)
    assert snapped.times == (0.0, 11.0, 30.0, 60.0)
    assert snapped.source == SOURCE_SNAPPED
    assert snapped.snapped_times == frozenset({11.0})


def test_snap_tie_breaks_toward_earlier_onset():
    b = bset([10.0])
    snapped = snap_boundaries(b, [9.0, 11.0], tolerance=2.0)
    assert snapped.interior == (9.0,)


def test_snap_endpoints_never_move():
    b = bset([30.0])
    snapped = snap_boundaries(b, [0.5, 59.5, 30.2], tolerance=1.0)
    assert snapped.times[0] == 0.0
    assert snapped.times[-1] == 60.0
    assert snapped.interior == (30.2,)


def test_snap_collapses_boundaries_sharing_an_onset():
    b = bset([19.0, 21.0])
    snapped = snap_boundaries(b, [20.0], tolerance=2.0)
    assert snapped.times == (0.0, 20.0, 60.0)
    assert 20.0 in snapped.snapped_times


def test_snap_idempotent():
    rng = np.random.default_rng(7)
    for _ in range(50):
        duration = float(rng.uniform(30.0, 120.0))
        interior = sorted(rng.uniform(1.0, duration - 1.0, size=6).tolist())
        onsets = sorted(rng.uniform(0.0, duration, size=4).tolist())
        once = snap_boundaries(bset(interior, duration), onsets, tolerance=2.0)
        twice = snap_boundaries(once, onsets, tolerance=2.0)
        assert twice.times == once.times
        assert twice.snapped_times == once.snapped_times


def test_snap_property_moved_or_unchanged():
    rng = np.random.default_rng(11)
    tolerance = 1.5
    for _ in range(100):
        duration = float(rng.uniform(20.0, 90.0))
        interior = sorted(set(rng.uniform(1.0, duration - 1.0, size=5).tolist()))
        onsets = sorted(rng.uniform(0.0, duration, size=3).tolist())
        before = bset(interior, duration)
        after = snap_boundaries(before, onsets, tolerance)
        for t in after.interior:
            near = [o for o in onsets if abs(o - t) <= 1e-12]
            assert t in before.interior or near, t
        # Anything left unsnapped really had no onset in range.
        for t in before.interior:
            if t in after.times and t not in after.snapped_times:
                moved_away = any(abs(o - t) <= tolerance for o in onsets)
                if moved_away:
                    # Only legal if snapping to that onset collided with t itself.
                    assert any(abs(o - t) <= tolerance and o in after.times
                               for o in onsets)


def test_snap_without_onsets_keeps_times():
    b = bset([12.0, 40.0])
    snapped = snap_boundaries(b, [], tolerance=5.0)
    assert snapped.times == b.times
    assert snapped.snapped_times == frozenset()


# -------------------------------------------------------------------- cutting


def cfg(min_s=4.0, max_s=30.0):
    return SegmentConfig(min_segment_seconds=min_s, max_segment_seconds=max_s)


def test_cut_plain_band_respecting_boundaries():
    b = bset([20.0, 45.0])
    segs = cut_segments(60.0, b, cfg(), song_id="abc")
    assert [(s.start, s.end) for s in segs] == [(0.0, 20.0), (20.0, 45.0), (45.0, 60.0)]
    assert [s.index for s in segs] == [0, 1, 2]
    assert all(s.song_id == "abc" for s in segs)


def test_cut_splits_overlong_span_equally():
    b = bset([], duration=70.0)
    segs = cut_segments(70.0, b, cfg())
    assert len(segs) == 3
    np.testing.assert_allclose([s.duration for s in segs], 70.0 / 3, atol=1e-9)
    assert segs[0].start == 0.0
    assert segs[-1].end == 70.0


def test_cut_merges_short_segment_into_right_neighbor():
    b = bset([2.0, 40.0])
    segs = cut_segments(60.0, b, cfg())
    # [0, 2) is too short -> merges right into [0, 40), which then splits.
    assert segs[0].start == 0.0
    assert segs[-1].end == 60.0
    assert all(s.duration >= 4.0 - 1e-9 for s in segs)
    assert all(s.duration <= 30.0 + 1e-9 for s in segs)
    assert 2.0 not in {s.start for s in segs}


def test_cut_merges_trailing_short_segment_into_left():
    b = bset([20.0, 40.0], duration=42.0)
    segs = cut_segments(42.0, b, cfg())
    assert [(s.start, s.end) for s in segs] == [(0.0, 20.0), (20.0, 42.0)]


def test_cut_whole_short_song_stays_single_segment():
    b = bset([], duration=2.5)
    segs = cut_segments(2.5, b, cfg())
    assert len(segs) == 1
    assert (segs[0].start, segs[0].end) == (0.0, 2.5)


def test_cut_marks_snapped_starts():
    snapped = snap_boundaries(bset([10.0, 40.0]), [11.0], tolerance=2.0)
    segs = cut_segments(60.0, snapped, cfg())
    flags = {s.start: s.snapped for s in segs}
    assert flags[11.0] is True
    assert flags[0.0] is False
    assert flags[40.0] is False


def test_cut_property_tiles_and_respects_band():
    rng = np.random.default_rng(23)
    c = cfg()
    for _ in range(200):
        duration = float(rng.uniform(1.0, 300.0))
        n = int(rng.integers(0, 8))
        interior = rng.uniform(0.0, duration, size=n).tolist()
        segs = cut_segments(duration, bset(interior, duration), c, song_id="x")
        assert segs[0].start == 0.0
        assert segs[-1].end == pytest.approx(duration)
        for a, b in zip(segs, segs[1:]):
            assert a.end == pytest.approx(b.start)
            assert a.index + 1 == b.index
        for s in segs:
            assert s.duration <= c.max_segment_seconds + 1e-9
            if len(segs) > 1:
                assert s.duration >= c.min_segment_seconds - 1e-9
