"""Novelty computation, peak picking, and boundary CSV import/export."""

import numpy as np
import pytest

from conftest import SR, buf, tone_blocks
from cratedig.boundaries import (
    BOUNDARY_CSV_HEADER,
    SOURCE_IMPORTED,
    SOURCE_NOVELTY,
    BoundaryConfig,
    BoundarySet,
    NoveltyCurve,
    detect_boundaries,
    export_boundaries_csv,
    import_boundaries_csv,
    novelty_curve,
    novelty_from_features,
    pick_peaks,
)
from cratedig.errors import CsvParseError, KernelTooLargeError, TooShortError
from cratedig.features import SSM, FeatureConfig, log_mel_features, normalize_frames, self_similarity


def brute_force_novelty(matrix: np.ndarray, frame_times: np.ndarray,
                        kernel_seconds: float) -> np.ndarray:
    """Reference implementation: slide the full 2-D checkerboard kernel
    along the main diagonal with zero padding."""
    fps = 1.0 / float(np.median(np.diff(frame_times)))
    kf = max(3, int(round(kernel_seconds * fps)))
    if kf % 2 == 0:
        kf += 1
    half = kf // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    sigma = kf / 3.0
    h = np.sign(offsets) * np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(h, h)
    n = matrix.shape[0]
    padded = np.zeros((n + 2 * half, n + 2 * half))
    padded[half:half + n, half:half + n] = matrix
    out = np.empty(n)
    for i in range(n):
        out[i] = float(np.sum(kernel * padded[i:i + kf, i:i + kf]))
    out = np.maximum(out, 0.0)
    if out.max() > 0:
        out = out / out.max()
    return out


def block_ssm(block_frames, fps: float = 10.0) -> SSM:
    """Ideal SSM: ones inside each block, zeros across blocks."""
    n = int(sum(block_frames))
    m = np.zeros((n, n))
    start = 0
    for size in block_frames:
        m[start:start + size, start:start + size] = 1.0
        start += size
    times = np.arange(n) / fps
    return SSM(matrix=m, frame_times=times)


def test_novelty_matches_brute_force_on_block_ssms():
    rng = np.random.default_rng(11)
    for _ in range(10):
        blocks = rng.integers(40, 120, size=int(rng.integers(2, 5)))
        ssm = block_ssm(list(blocks))
        kernel_seconds = float(rng.uniform(2.0, 6.0))
        got = novelty_curve(ssm, kernel_seconds)
        want = brute_force_novelty(ssm.matrix, ssm.frame_times, kernel_seconds)
        assert np.max(np.abs(got.values - want)) < 1e-9


def test_novelty_peak_within_one_frame_of_transition():
    ssm = block_ssm([80, 60, 100])
    got = novelty_curve(ssm, 4.0)
    for transition in (80, 140):
        window = got.values[transition - 20:transition + 21]
        peak = transition - 20 + int(np.argmax(window))
        assert abs(peak - transition) <= 1


def test_fast_path_equals_ssm_path():
    rng = np.random.default_rng(3)
    for _ in range(5):
        frames = rng.standard_normal((int(rng.integers(60, 200)), 16))
        times = np.arange(frames.shape[0]) / 8.0
        unit = normalize_frames(frames)
        ssm = SSM(matrix=np.clip(unit @ unit.T, -1.0, 1.0), frame_times=times)
        slow = novelty_curve(ssm, 3.0)
        fast = novelty_from_features(frames, times, 3.0)
        assert np.max(np.abs(slow.values - fast.values)) < 1e-6


def test_novelty_flat_ssm_is_quiet():
    n = 200
    ssm = SSM(matrix=np.ones((n, n)), frame_times=np.arange(n) / 10.0)
    nc = novelty_curve(ssm, 4.0)
    # no structure: nothing should survive peak picking
    bounds = pick_peaks(nc, BoundaryConfig(), song_duration=20.0)
    assert bounds.interior == ()


def test_kernel_too_large():
    ssm = block_ssm([10, 10])
    with pytest.raises(KernelTooLargeError):
        novelty_curve(ssm, 100.0)


def test_pick_peaks_separation_and_endpoints():
    rng = np.random.default_rng(4)
    cfg = BoundaryConfig(min_separation_seconds=5.0,
                         peak_median_window_seconds=4.0, peak_offset=0.01)
    for _ in range(50):
        n = 400
        times = np.arange(n) / 10.0
        values = rng.uniform(0, 1, size=n)
        nc = NoveltyCurve(values=values, frame_times=times)
        bounds = pick_peaks(nc, cfg, song_duration=40.0)
        assert bounds.times[0] == 0.0 and bounds.times[-1] == 40.0
        assert all(b > a for a, b in zip(bounds.times, bounds.times[1:]))
        inner = bounds.interior
        assert all(b - a >= cfg.min_separation_seconds
                   for a, b in zip(inner, inner[1:]))


def test_pick_peaks_prefers_larger_peak():
    times = np.arange(100) / 10.0
    values = np.zeros(100)
    values[30] = 0.8
    values[35] = 1.0  # within min_separation of the other: larger wins
    nc = NoveltyCurve(values=values, frame_times=times)
    cfg = BoundaryConfig(min_separation_seconds=2.0,
                         peak_median_window_seconds=1.0, peak_offset=0.05)
    bounds = pick_peaks(nc, cfg, song_duration=10.0)
    assert bounds.interior == (3.5,)


def test_detect_boundaries_on_timbre_blocks():
    b = buf(tone_blocks([220, 1760, 440], 20.0))
    got = detect_boundaries(b, FeatureConfig(), BoundaryConfig())
    assert got.source == SOURCE_NOVELTY
    assert len(got.interior) == 2
    assert abs(got.interior[0] - 20.0) < 1.0
    assert abs(got.interior[1] - 40.0) < 1.0


def test_detect_boundaries_too_short():
    b = buf(tone_blocks([220, 880], 2.0))
    with pytest.raises(TooShortError):
        detect_boundaries(b, FeatureConfig(), BoundaryConfig(kernel_seconds=8.0))


def test_boundary_set_build_and_validation():
    bs = BoundarySet.build([5.0, 2.0, 5.0, -1.0, 99.0], 10.0, SOURCE_NOVELTY)
    assert bs.times == (0.0, 2.0, 5.0, 10.0)
    assert bs.interior == (2.0, 5.0)
    with pytest.raises(ValueError):
        BoundarySet(times=(0.0, 5.0), song_duration=10.0, source=SOURCE_NOVELTY)
    with pytest.raises(ValueError):
        BoundarySet(times=(0.0, 5.0, 5.0, 10.0), song_duration=10.0,
                    source=SOURCE_NOVELTY)
    with pytest.raises(ValueError):
        BoundarySet(times=(0.0, 10.0), song_duration=10.0, source="guess")


def test_boundary_csv_round_trip(tmp_path):
    bs = BoundarySet.build([12.25, 30.5], 60.0, SOURCE_NOVELTY)
    path = tmp_path / "b.csv"
    export_boundaries_csv(bs, path)
    text = path.read_text()
    assert text.splitlines()[0] == BOUNDARY_CSV_HEADER
    back = import_boundaries_csv(path, 60.0)
    assert back.source == SOURCE_IMPORTED
    assert back.times == bs.times


def test_boundary_csv_errors(tmp_path):
    p = tmp_path / "bad_header.csv"
    p.write_text("time\n1.0\n")
    with pytest.raises(CsvParseError) as exc:
        import_boundaries_csv(p, 10.0)
    assert exc.value.row == 1

    p = tmp_path / "bad_value.csv"
    p.write_text("boundary_time\n1.0\nnope\n")
    with pytest.raises(CsvParseError) as exc:
        import_boundaries_csv(p, 10.0)
    assert exc.value.row == 3

    p = tmp_path / "two_cols.csv"
    p.write_text("boundary_time\n1.0,2.0\n")
    with pytest.raises(CsvParseError) as exc:
        import_boundaries_csv(p, 10.0)
    assert exc.value.row == 2


def test_boundary_csv_empty_gives_endpoints(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    bs = import_boundaries_csv(p, 42.0)
    assert bs.times == (0.0, 42.0)
