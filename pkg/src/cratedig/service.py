"""HTTP facade over a scanned catalog.

Serves the catalog for browsing, streams segment audio with Range
support, and lets clients edit the class set and trigger rescoring.
All catalog reads observe an atomic (revision, catalog) snapshot;
rescoring is single-flight and bumps the revision on success.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import replace
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import audio as audio_mod
from . import catalog as catalog_mod
from .catalog import Catalog, PipelineConfig, activity_for_song, segment_result_key
from .classifier import ClassSet, class_anchor, class_set_from_dict
from .embedding import EmbeddingCache, EncoderBackend
from .errors import (
    CratedigError,
    DegenerateAnchorError,
    MissingCacheEntryError,
    SchemaViolationError,
)

_PLOT_MAX_POINTS = 4000
_DECODE_CACHE_SIZE = 4


class _DecodeCache:
    """Tiny LRU of decoded songs keyed by song id."""

    def __init__(self, maxsize: int = _DECODE_CACHE_SIZE):
        self._maxsize = maxsize
        self._items = OrderedDict()
        self._lock = threading.Lock()

    def get(self, song_id: str, path: str):
        with self._lock:
            if song_id in self._items:
                self._items.move_to_end(song_id)
                return self._items[song_id]
        buf = audio_mod.decode(Path(path))
        with self._lock:
            self._items[song_id] = buf
            self._items.move_to_end(song_id)
            while len(self._items) > self._maxsize:
                self._items.popitem(last=False)
        return buf


class ServiceState:
    """Mutable service-side state: the catalog plus its revision."""

    def __init__(self, catalog: Catalog, backend: EncoderBackend,
                 cache: EmbeddingCache, pipeline: PipelineConfig | None = None):
        self.backend = backend
        self.cache = cache
        self.pipeline = pipeline or PipelineConfig()
        self._catalog = catalog
        self._revision = 1
        self._state_lock = threading.Lock()
        self._rescore_lock = threading.Lock()
        self._decode_cache = _DecodeCache()

    def snapshot(self) -> tuple:
        with self._state_lock:
            return self._revision, self._catalog

    def replace_catalog(self, catalog: Catalog) -> int:
        with self._state_lock:
            self._catalog = catalog
            self._revision += 1
            return self._revision


def _song_or_none(catalog: Catalog, song_id: str):
    return catalog.song_by_id(song_id)


def _segment_payload(catalog: Catalog, song) -> list:
    segments = []
    for seg in song.segments:
        result = catalog.results.get(segment_result_key(song.song_id, seg.index))
        item = {
            "index": seg.index,
            "start": seg.start,
            "end": seg.end,
            "duration": seg.duration,
            "snapped": seg.snapped,
            "non_music": seg.non_music,
        }
        if result is not None:
            item["predicted"] = result.predicted
            item["probs"] = list(result.probs)
            item["logits"] = list(result.logits)
        segments.append(item)
    return segments


def _parse_range(header: str, total: int) -> tuple | None:
    """Parse a single-range bytes header.  Returns (start, end) inclusive,
    None when the header should be ignored, or raises ValueError when the
    range is unsatisfiable."""
    unit, _, spec = header.partition("=")
    if unit.strip().lower() != "bytes" or not spec:
        return None
    if "," in spec:
        return None  # multi-range: serve the full body instead
    first, _, last = spec.strip().partition("-")
    first = first.strip()
    last = last.strip()
    try:
        if first == "":
            if last == "":
                return None
            length = int(last)
            if length <= 0:
                raise ValueError("zero-length suffix range")
            start = max(total - length, 0)
            return start, total - 1
        start = int(first)
        end = int(last) if last else total - 1
    except ValueError as exc:
        raise ValueError(f"malformed range {header!r}") from exc
    if start >= total or end < start:
        raise ValueError(f"range {header!r} outside 0..{total - 1}")
    return start, min(end, total - 1)


def _stride(values: list, max_points: int) -> list:
    if len(values) <= max_points:
        return values
    step = -(-len(values) // max_points)
    return values[::step]


def build_app(state: ServiceState, static_dir: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="cratedig", docs_url=None, redoc_url=None)

    @app.exception_handler(CratedigError)
    async def _domain_error(request: Request, exc: CratedigError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/api/songs")
    def list_songs():
        revision, catalog = state.snapshot()
        return {
            "revision": revision,
            "backend": {"name": catalog.backend_name,
                        "version": catalog.backend_version,
                        "dim": catalog.backend_dim},
            "songs": [
                {
                    "song_id": s.song_id,
                    "name": Path(s.path).name,
                    "path": s.path,
                    "duration": s.duration,
                    "segment_count": len(s.segments),
                }
                for s in catalog.songs
            ],
            "skipped": [{"path": s.path, "reason": s.reason} for s in catalog.skipped],
        }

    @app.get("/api/songs/{song_id}/segments")
    def song_segments(song_id: str):
        revision, catalog = state.snapshot()
        song = _song_or_none(catalog, song_id)
        if song is None:
            return JSONResponse(status_code=404,
                                content={"detail": f"unknown song {song_id!r}"})
        return {
            "revision": revision,
            "song_id": song.song_id,
            "duration": song.duration,
            "class_ids": list(catalog.class_set.ids),
            "boundaries": {
                "times": list(song.boundaries.times),
                "source": song.boundaries.source,
                "snapped_times": sorted(song.boundaries.snapped_times),
            },
            "segments": _segment_payload(catalog, song),
        }

    @app.get("/api/segments/{song_id}/{index}/audio")
    def segment_audio(song_id: str, index: int, request: Request):
        _, catalog = state.snapshot()
        song = _song_or_none(catalog, song_id)
        if song is None:
            return JSONResponse(status_code=404,
                                content={"detail": f"unknown song {song_id!r}"})
        seg = next((s for s in song.segments if s.index == index), None)
        if seg is None:
            return JSONResponse(status_code=404,
                                content={"detail": f"song has no segment {index}"})
        buf = state._decode_cache.get(song.song_id, song.path)
        piece = audio_mod.slice_buffer(buf, seg.start, seg.end)
        body = audio_mod.export_wav_bytes(piece)
        total = len(body)
        headers = {"Accept-Ranges": "bytes"}

        range_header = request.headers.get("range")
        if range_header:
            try:
                parsed = _parse_range(range_header, total)
            except ValueError:
                headers["Content-Range"] = f"bytes */{total}"
                return Response(status_code=416, headers=headers)
            if parsed is not None:
                start, end = parsed
                headers["Content-Range"] = f"bytes {start}-{end}/{total}"
                return Response(content=body[start:end + 1], status_code=206,
                                media_type="audio/wav", headers=headers)
        return Response(content=body, media_type="audio/wav", headers=headers)

    @app.get("/api/songs/{song_id}/plotdata")
    def plotdata(song_id: str):
        revision, catalog = state.snapshot()
        song = _song_or_none(catalog, song_id)
        if song is None:
            return JSONResponse(status_code=404,
                                content={"detail": f"unknown song {song_id!r}"})
        buf = state._decode_cache.get(song.song_id, song.path)
        timeline, _, _ = activity_for_song(buf, Path(song.path), state.pipeline)
        if timeline is not None:
            times = _stride(list(timeline.frame_times), _PLOT_MAX_POINTS)
            speech = _stride(list(timeline.speech_scores), _PLOT_MAX_POINTS)
            music = _stride(list(timeline.music_scores), _PLOT_MAX_POINTS)
        else:
            times, speech, music = [], [], []
        segments = []
        for seg in song.segments:
            result = catalog.results.get(segment_result_key(song.song_id, seg.index))
            segments.append({
                "index": seg.index, "start": seg.start, "end": seg.end,
                "predicted": result.predicted if result else None,
            })
        return {
            "revision": revision,
            "song_id": song.song_id,
            "duration": song.duration,
            "times": times,
            "speech": speech,
            "music": music,
            "boundaries": list(song.boundaries.times),
            "boundary_snapped": [t in song.boundaries.snapped_times
                                 for t in song.boundaries.times],
            "segments": segments,
        }

    @app.get("/api/classes")
    def get_classes():
        revision, catalog = state.snapshot()
        return {
            "revision": revision,
            "logit_scale": catalog.class_set.logit_scale,
            "classes": [
                {"id": c.id, "display_name": c.display_name, "prompts": list(c.prompts)}
                for c in catalog.class_set.classes
            ],
        }

    @app.put("/api/classes")
    def put_classes(payload: dict):
        try:
            new_set = class_set_from_dict(payload)
        except (SchemaViolationError, CratedigError, ValueError) as exc:
            return JSONResponse(status_code=422,
                                content={"detail": str(exc), "errors": []})
        anchored = []
        errors = []
        for cls in new_set.classes:
            try:
                anchored.append(replace(cls, anchor=class_anchor(state.backend, cls)))
            except DegenerateAnchorError as exc:
                errors.append({"class_id": cls.id, "error": str(exc)})
            except CratedigError as exc:
                errors.append({"class_id": cls.id, "error": str(exc)})
        if errors:
            return JSONResponse(
                status_code=422,
                content={"detail": "class set has invalid classes", "errors": errors})
        _, catalog = state.snapshot()
        new_catalog = replace(catalog,
                              class_set=ClassSet(tuple(anchored), new_set.logit_scale))
        revision = state.replace_catalog(new_catalog)
        return {"revision": revision, "class_count": len(anchored)}

    @app.post("/api/rescore")
    def rescore():
        if not state._rescore_lock.acquire(blocking=False):
            return JSONResponse(status_code=409,
                                content={"detail": "a rescore is already running"})
        try:
            _, before = state.snapshot()
            try:
                after = catalog_mod.rescore(before, state.backend, state.cache)
            except MissingCacheEntryError as exc:
                return JSONResponse(
                    status_code=409,
                    content={"detail": str(exc), "missing": list(exc.keys)})
            changed = catalog_mod.diff_results(before, after)
            revision = state.replace_catalog(after)
            return {"revision": revision,
                    "changed_count": len(changed),
                    "changed": changed}
        finally:
            state._rescore_lock.release()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
