"""Library scanning, per-song analysis, and the persisted catalog.

A scan walks a directory tree, analyzes each audio file (boundaries,
speech/music activity, segment cuts), embeds every segment through a
write-through cache, classifies the segments, and collects everything
into a Catalog that serializes to canonical JSON.  Songs that fail to
decode or analyze are recorded as skipped with a reason instead of
aborting the scan.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import activity as activity_mod
from . import audio as audio_mod
from .activity import ActivityConfig, ActivityTimeline, Window
from .audio import SUPPORTED_EXTENSIONS, AudioBuffer
from .boundaries import (
    SOURCE_NOVELTY,
    BoundaryConfig,
    BoundarySet,
    detect_boundaries,
    import_boundaries_csv,
)
from .classifier import (
    Classification,
    ClassSet,
    class_set_from_dict,
    class_set_to_dict,
    classify,
    default_class_set,
    with_anchors,
)
from .embedding import Embedding, EmbeddingCache, EncoderBackend, audio_cache_key, embed_audio
from .errors import (
    CratedigError,
    DurationTooLongError,
    MissingCacheEntryError,
    SchemaViolationError,
    TooShortError,
    UnsupportedVersionError,
)
from .features import FeatureConfig
from .segmentation import Segment, SegmentConfig, cut_segments, snap_boundaries, speech_onsets

log = logging.getLogger(__name__)

CATALOG_VERSION = 1
ACTIVITY_SIDECAR_SUFFIX = ".activity.csv"
BOUNDARY_SIDECAR_SUFFIX = ".boundaries.csv"
PLOT_ACTIVITY_HEADER = ["time", "speech_score", "music_score"]
PLOT_BOUNDARY_HEADER = ["boundary_time", "snapped"]
_FLOAT_DECIMALS = 6
_NON_MUSIC_OVERLAP = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    """All tunables for one scan, bundled."""

    feature: FeatureConfig = field(default_factory=FeatureConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    activity: ActivityConfig = field(default_factory=ActivityConfig)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    flag_non_music: bool = True


@dataclass(frozen=True)
class SongRecord:
    """Analysis output for one decoded song."""

    song_id: str
    path: str
    duration: float
    boundaries: BoundarySet
    speech_windows: tuple
    music_windows: tuple
    segments: tuple
    embedding_keys: tuple

    def __post_init__(self):
        if len(self.embedding_keys) != len(self.segments):
            raise ValueError("one embedding key per segment required")


@dataclass(frozen=True)
class SkippedSong:
    path: str
    reason: str


@dataclass(frozen=True)
class Catalog:
    class_set: ClassSet
    backend_name: str
    backend_version: str
    backend_dim: int
    songs: tuple
    skipped: tuple
    results: dict
    version: int = CATALOG_VERSION

    def song_by_id(self, song_id: str) -> SongRecord | None:
        for song in self.songs:
            if song.song_id == song_id:
                return song
        return None


def segment_result_key(song_id: str, index: int) -> str:
    return f"{song_id}:{index}"


def file_song_id(path: Path | str) -> str:
    """Stable song identity: SHA-256 of the file bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sidecar_path(audio_path: Path, suffix: str) -> Path:
    return audio_path.with_name(audio_path.stem + suffix)


def _merge_touching(windows: list) -> tuple:
    """Sort and coalesce overlapping or touching windows of one label."""
    if not windows:
        return ()
    ordered = sorted(windows, key=lambda w: (w.start, w.end))
    merged = [ordered[0]]
    for w in ordered[1:]:
        last = merged[-1]
        if w.start <= last.end:
            if w.end > last.end:
                merged[-1] = Window(last.start, w.end, last.label)
        else:
            merged.append(w)
    return tuple(merged)


def activity_for_song(buf: AudioBuffer, audio_path: Path,
                      cfg: PipelineConfig) -> tuple:
    """Resolve a song's activity: sidecar CSV when present, else heuristic.

    Returns (timeline_or_none, speech_windows, music_windows).  The
    timeline is None when the sidecar carries windows directly or the
    song is too short for the heuristic.
    """
    sidecar = sidecar_path(audio_path, ACTIVITY_SIDECAR_SUFFIX)
    if sidecar.is_file():
        imported = activity_mod.import_activity_csv(sidecar)
        if isinstance(imported, ActivityTimeline):
            speech, music = activity_mod.binarize_and_merge(imported, cfg.activity)
            return imported, speech, music
        speech = _merge_touching([w for w in imported if w.label == activity_mod.LABEL_SPEECH])
        music = _merge_touching([w for w in imported if w.label == activity_mod.LABEL_MUSIC])
        return None, speech, music
    try:
        timeline = activity_mod.heuristic_activity(buf, cfg.feature)
    except TooShortError:
        return None, (), ()
    speech, music = activity_mod.binarize_and_merge(timeline, cfg.activity)
    return timeline, speech, music


def boundaries_for_song(buf: AudioBuffer, audio_path: Path,
                        cfg: PipelineConfig) -> BoundarySet:
    """Resolve structural boundaries: sidecar CSV when present, else the
    novelty detector; songs too short to analyze become one span."""
    sidecar = sidecar_path(audio_path, BOUNDARY_SIDECAR_SUFFIX)
    if sidecar.is_file():
        return import_boundaries_csv(sidecar, buf.duration_seconds)
    try:
        return detect_boundaries(buf, cfg.feature, cfg.boundary)
    except TooShortError:
        return BoundarySet.build((), buf.duration_seconds, SOURCE_NOVELTY)


def _music_overlap_fraction(segment: Segment, music_windows: tuple) -> float:
    if segment.duration <= 0:
        return 0.0
    covered = 0.0
    for w in music_windows:
        covered += max(0.0, min(segment.end, w.end) - max(segment.start, w.start))
    return covered / segment.duration


def analyze_song(path: Path, cfg: PipelineConfig, class_set: ClassSet,
                 backend: EncoderBackend, cache: EmbeddingCache | None) -> tuple:
    """Full single-song pipeline.  Returns (SongRecord, results dict)."""
    path = Path(path)
    song_id = file_song_id(path)
    buf = audio_mod.decode(path)
    duration = buf.duration_seconds

    boundaries = boundaries_for_song(buf, path, cfg)
    _, speech_windows, music_windows = activity_for_song(buf, path, cfg)

    onsets = speech_onsets(speech_windows)
    if onsets:
        boundaries = snap_boundaries(boundaries, onsets, cfg.segment.snap_tolerance_seconds)

    segments = cut_segments(duration, boundaries, cfg.segment, song_id=song_id)
    if cfg.flag_non_music and music_windows:
        segments = tuple(
            replace(s, non_music=_music_overlap_fraction(s, music_windows) < _NON_MUSIC_OVERLAP)
            for s in segments
        )

    keys = []
    results = {}
    for seg in segments:
        piece = audio_mod.slice_buffer(buf, seg.start, seg.end)
        key = audio_cache_key(backend, piece)
        if cache is not None:
            emb, _ = cache.get_or_compute(key, "audio", lambda p=piece: embed_audio(backend, p))
        else:
            emb = embed_audio(backend, piece)
        keys.append(key)
        results[segment_result_key(song_id, seg.index)] = classify(emb, class_set)

    record = SongRecord(
        song_id=song_id,
        path=str(path),
        duration=duration,
        boundaries=boundaries,
        speech_windows=speech_windows,
        music_windows=music_windows,
        segments=segments,
        embedding_keys=tuple(keys),
    )
    return record, results


def discover_audio_files(root: Path) -> list:
    """Audio files under root, sorted for deterministic scans."""
    return sorted(
        p for p in Path(root).rglob("*")
        if p.is_file() and p.suffix.lower() in SUPPORTED_EXTENSIONS
    )


def scan_library(root: Path | str, backend: EncoderBackend,
                 cache: EmbeddingCache | None,
                 cfg: PipelineConfig | None = None,
                 class_set: ClassSet | None = None,
                 workers: int = 1,
                 progress=None) -> Catalog:
    """Scan a directory tree into a Catalog.

    ``workers`` parallelizes per-song analysis; outputs are sorted so
    the resulting catalog is identical for any worker count.
    ``progress`` is an optional callable receiving per-song event dicts.
    """
    cfg = cfg or PipelineConfig()
    class_set = with_anchors(class_set or default_class_set(), backend)
    paths = discover_audio_files(Path(root))
    if not paths:
        log.warning("no audio files found under %s", root)

    songs = []
    skipped = []
    results = {}

    def _work(path: Path):
        return analyze_song(path, cfg, class_set, backend, cache)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [(path, pool.submit(_work, path)) for path in paths]
        for path, future in futures:
            try:
                record, song_results = future.result()
            except (CratedigError, OSError) as exc:
                reason = f"{type(exc).__name__}: {exc}"
                skipped.append(SkippedSong(path=str(path), reason=reason))
                log.warning("skipping %s: %s", path, reason)
                if progress:
                    progress({"event": "song", "path": str(path),
                              "status": "skipped", "reason": reason})
                continue
            songs.append(record)
            results.update(song_results)
            if progress:
                progress({"event": "song", "path": str(path), "status": "ok",
                          "song_id": record.song_id,
                          "segments": len(record.segments)})

    songs.sort(key=lambda s: (s.song_id, s.path))
    skipped.sort(key=lambda s: s.path)
    catalog = Catalog(
        class_set=class_set,
        backend_name=backend.name,
        backend_version=backend.version,
        backend_dim=backend.dim,
        songs=tuple(songs),
        skipped=tuple(skipped),
        results=results,
    )
    if progress:
        progress({"event": "done", "songs": len(songs), "skipped": len(skipped),
                  "segments": sum(len(s.segments) for s in songs)})
    return catalog


def rescore(catalog: Catalog, backend: EncoderBackend, cache: EmbeddingCache,
            class_set: ClassSet | None = None) -> Catalog:
    """Reclassify every segment from cached embeddings.

    Computes text anchors for the (possibly new) class set when they are
    not already present, but never touches the audio encoder.  Raises
    MissingCacheEntryError listing every absent segment embedding.
    """
    new_set = class_set or catalog.class_set
    if not new_set.has_anchors:
        new_set = with_anchors(new_set, backend)
    missing = []
    results = {}
    for song in catalog.songs:
        for seg, key in zip(song.segments, song.embedding_keys):
            rkey = segment_result_key(song.song_id, seg.index)
            vec = cache.get(key)
            if vec is None:
                missing.append(rkey)
                continue
            results[rkey] = classify(Embedding(vec, "audio"), new_set)
    if missing:
        raise MissingCacheEntryError(
            f"{len(missing)} segment embeddings are not in the cache; "
            f"run a scan first", keys=tuple(missing))
    return replace(catalog, class_set=new_set, results=results)


def diff_results(old: Catalog, new: Catalog) -> list:
    """Segment keys whose predicted class changed between two catalogs."""
    changed = []
    for key, result in new.results.items():
        before = old.results.get(key)
        if before is None or before.predicted != result.predicted:
            changed.append(key)
    return sorted(changed)


@dataclass(frozen=True)
class AblationPoint:
    duration: float
    predicted: str
    target_prob: float


@dataclass(frozen=True)
class AblationRow:
    source: str
    points: tuple


@dataclass(frozen=True)
class AblationReport:
    target_class: str
    durations: tuple
    rows: tuple


def ablate_durations(sources, durations, class_set: ClassSet,
                     target_class_id: str, backend: EncoderBackend) -> AblationReport:
    """Re-classify the leading slice of each clip at shrinking durations.

    ``sources`` is an iterable of (name, AudioBuffer).  Durations must be
    strictly decreasing and no longer than each clip.
    """
    durations = tuple(float(d) for d in durations)
    if not durations or any(d <= 0 for d in durations):
        raise ValueError(f"durations must be positive, got {durations}")
    if any(b >= a for a, b in zip(durations, durations[1:])):
        raise ValueError(f"durations must be strictly decreasing, got {durations}")
    if not class_set.has_anchors:
        class_set = with_anchors(class_set, backend)
    if target_class_id not in class_set.ids:
        raise ValueError(f"unknown target class {target_class_id!r}")
    target_index = class_set.ids.index(target_class_id)

    rows = []
    for name, buf in sources:
        tol = 0.5 / buf.sample_rate
        if durations[0] > buf.duration_seconds + tol:
            raise DurationTooLongError(
                f"clip {name!r} is {buf.duration_seconds:.2f}s, shorter than "
                f"requested duration {durations[0]}s")
        points = []
        for d in durations:
            piece = audio_mod.slice_buffer(buf, 0.0, min(d, buf.duration_seconds))
            result = classify(embed_audio(backend, piece), class_set)
            points.append(AblationPoint(duration=d, predicted=result.predicted,
                                        target_prob=result.probs[target_index]))
        rows.append(AblationRow(source=name, points=tuple(points)))
    return AblationReport(target_class=target_class_id, durations=durations,
                          rows=tuple(rows))


def ablation_to_csv(report: AblationReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = ["source"]
    for d in report.durations:
        header.append(f"prob_{d:g}s")
        header.append(f"pred_{d:g}s")
    writer.writerow(header)
    for row in report.rows:
        cells = [row.source]
        for p in row.points:
            cells.append(f"{p.target_prob:.6f}")
            cells.append(p.predicted)
        writer.writerow(cells)
    return out.getvalue()


def export_plot_data(record: SongRecord, timeline: ActivityTimeline | None,
                     out_dir: Path | str) -> tuple:
    """Write per-song plotting CSVs: activity scores and boundary marks."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    activity_path = out_dir / f"{record.song_id}_activity.csv"
    lines = [",".join(PLOT_ACTIVITY_HEADER)]
    if timeline is not None:
        for t, s, m in zip(timeline.frame_times, timeline.speech_scores, timeline.music_scores):
            lines.append(f"{t:.6f},{s:.6f},{m:.6f}")
    activity_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    boundary_path = out_dir / f"{record.song_id}_boundaries.csv"
    lines = [",".join(PLOT_BOUNDARY_HEADER)]
    for t in record.boundaries.times:
        flag = "true" if t in record.boundaries.snapped_times else "false"
        lines.append(f"{t:.6f},{flag}")
    boundary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return activity_path, boundary_path


def export_segments(catalog: Catalog, out_dir: Path | str,
                    class_id: str | None = None) -> list:
    """Cut classified segments to WAV files named
    ``<song_id>_<index>_<class>.wav``.  Returns the written paths."""
    if class_id is not None and class_id not in catalog.class_set.ids:
        raise ValueError(f"unknown class {class_id!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for song in catalog.songs:
        wanted = []
        for seg in song.segments:
            result = catalog.results.get(segment_result_key(song.song_id, seg.index))
            if result is None:
                continue
            if class_id is None or result.predicted == class_id:
                wanted.append((seg, result.predicted))
        if not wanted:
            continue
        buf = audio_mod.decode(Path(song.path))
        for seg, predicted in wanted:
            piece = audio_mod.slice_buffer(buf, seg.start, seg.end)
            dest = out_dir / f"{song.song_id}_{seg.index}_{predicted}.wav"
            audio_mod.export_wav(piece, dest)
            written.append(dest)
    return written


def _round_floats(obj):
    if isinstance(obj, float):
        return round(obj, _FLOAT_DECIMALS)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _windows_to_json(windows) -> list:
    return [{"start": w.start, "end": w.end} for w in windows]


def _windows_from_json(items, label: str) -> tuple:
    return tuple(Window(w["start"], w["end"], label) for w in items)


def catalog_to_dict(catalog: Catalog) -> dict:
    songs = []
    for song in catalog.songs:
        songs.append({
            "song_id": song.song_id,
            "path": song.path,
            "duration": song.duration,
            "boundaries": {
                "times": list(song.boundaries.times),
                "source": song.boundaries.source,
                "snapped_times": sorted(song.boundaries.snapped_times),
            },
            "speech_windows": _windows_to_json(song.speech_windows),
            "music_windows": _windows_to_json(song.music_windows),
            "segments": [
                {"index": seg.index, "start": seg.start, "end": seg.end,
                 "snapped": seg.snapped, "non_music": seg.non_music,
                 "embedding_key": key}
                for seg, key in zip(song.segments, song.embedding_keys)
            ],
        })
    results = {
        key: {"logits": list(r.logits), "probs": list(r.probs), "predicted": r.predicted}
        for key, r in catalog.results.items()
    }
    return {
        "version": catalog.version,
        "backend": {"name": catalog.backend_name,
                    "version": catalog.backend_version,
                    "dim": catalog.backend_dim},
        "class_set": class_set_to_dict(catalog.class_set),
        "songs": songs,
        "skipped": [{"path": s.path, "reason": s.reason} for s in catalog.skipped],
        "results": results,
    }


def save_catalog(catalog: Catalog, path: Path | str) -> None:
    """Serialize with floats rounded to 6 decimals and sorted keys, so
    equal catalogs produce byte-identical files."""
    payload = _round_floats(catalog_to_dict(catalog))
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _catalog_schema() -> dict:
    text = resources.files("cratedig.data").joinpath("catalog.schema.json").read_text("utf-8")
    return json.loads(text)


def catalog_from_dict(data: dict) -> Catalog:
    if not isinstance(data, dict):
        raise SchemaViolationError("catalog must be a JSON object")
    version = data.get("version")
    if version != CATALOG_VERSION:
        raise UnsupportedVersionError(
            f"catalog version {version!r} is not supported (expected {CATALOG_VERSION})")
    try:
        jsonschema.validate(data, _catalog_schema())
    except jsonschema.ValidationError as exc:
        if exc.validator == "additionalProperties" and not list(exc.absolute_path):
            raise UnsupportedVersionError(
                f"catalog carries unknown top-level fields: {exc.message}") from None
        raise SchemaViolationError(
            f"catalog failed validation at {list(exc.absolute_path)}: {exc.message}") from None

    class_set = class_set_from_dict(data["class_set"])
    class_ids = class_set.ids

    songs = []
    try:
        for item in data["songs"]:
            b = item["boundaries"]
            boundaries = BoundarySet(
                times=tuple(float(t) for t in b["times"]),
                song_duration=float(item["duration"]),
                source=b["source"],
                snapped_times=frozenset(float(t) for t in b["snapped_times"]),
            )
            segments = tuple(
                Segment(song_id=item["song_id"], index=s["index"],
                        start=float(s["start"]), end=float(s["end"]),
                        snapped=bool(s["snapped"]), non_music=bool(s["non_music"]))
                for s in item["segments"]
            )
            songs.append(SongRecord(
                song_id=item["song_id"],
                path=item["path"],
                duration=float(item["duration"]),
                boundaries=boundaries,
                speech_windows=_windows_from_json(item["speech_windows"],
                                                  activity_mod.LABEL_SPEECH),
                music_windows=_windows_from_json(item["music_windows"],
                                                 activity_mod.LABEL_MUSIC),
                segments=segments,
                embedding_keys=tuple(s["embedding_key"] for s in item["segments"]),
            ))
    except (ValueError, CratedigError) as exc:
        raise SchemaViolationError(f"catalog songs are inconsistent: {exc}") from None

    known_keys = {
        segment_result_key(song.song_id, seg.index)
        for song in songs for seg in song.segments
    }
    results = {}
    for key, r in data["results"].items():
        if key not in known_keys:
            raise SchemaViolationError(f"result {key!r} references no known segment")
        if r["predicted"] not in class_ids:
            raise SchemaViolationError(
                f"result {key!r} predicts unknown class {r['predicted']!r}")
        if len(r["logits"]) != len(class_ids) or len(r["probs"]) != len(class_ids):
            raise SchemaViolationError(f"result {key!r} has wrong score arity")
        results[key] = Classification(
            class_ids=class_ids,
            logits=tuple(float(v) for v in r["logits"]),
            probs=tuple(float(v) for v in r["probs"]),
            predicted=r["predicted"],
        )

    return Catalog(
        class_set=class_set,
        backend_name=data["backend"]["name"],
        backend_version=data["backend"]["version"],
        backend_dim=int(data["backend"]["dim"]),
        songs=tuple(songs),
        skipped=tuple(SkippedSong(path=s["path"], reason=s["reason"])
                      for s in data["skipped"]),
        results=results,
    )


def load_catalog(path: Path | str) -> Catalog:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolationError(f"catalog {path} is not valid JSON: {exc}") from None
    return catalog_from_dict(data)
