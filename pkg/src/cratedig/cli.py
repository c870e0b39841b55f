"""Command-line interface.

Subcommands: scan, rescore, ablate, export, plot-data, serve.
Settings resolve with precedence: built-in defaults, then a JSON config
file, then CRATEDIG_* environment variables, then command-line flags.

Exit codes: 0 success, 1 completed with skipped songs or a runtime
failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import audio as audio_mod
from . import catalog as catalog_mod
from .activity import ActivityConfig
from .boundaries import BoundaryConfig
from .catalog import PipelineConfig
from .classifier import default_class_set, load_class_config
from .embedding import EmbeddingCache, MockBackend, PrecomputedBackend
from .errors import CratedigError
from .features import FeatureConfig
from .segmentation import SegmentConfig

log = logging.getLogger("cratedig")

ENV_PREFIX = "CRATEDIG_"
_ENV_KEYS = ("backend", "cache", "classes", "workers")


class UsageError(Exception):
    """Bad arguments or configuration; maps to exit code 2."""


def _parse_backend_spec(spec: str):
    """Build a backend from a spec string.

    Forms: ``mock``, ``mock:dim=256``, ``precomputed:<dir>``,
    ``model:audio=enc.pt,text=txt.pt,tokenizer=tok.json``.
    """
    name, _, rest = spec.partition(":")
    options = {}
    if rest:
        if name == "precomputed" and "=" not in rest:
            options["dir"] = rest
        else:
            for part in rest.split(","):
                key, eq, value = part.partition("=")
                if not eq:
                    raise UsageError(f"bad backend option {part!r} in {spec!r}")
                options[key.strip()] = value.strip()

    def _int_opt(key, default):
        try:
            return int(options[key]) if key in options else default
        except ValueError:
            raise UsageError(f"backend option {key} must be an integer") from None

    if name == "mock":
        return MockBackend(
            dim=_int_opt("dim", 512),
            sample_rate=_int_opt("sample_rate", None),
            max_duration=float(options["max_duration"]) if "max_duration" in options else None,
            fixed_audio_token=options.get("fixed_audio_token"),
        )
    if name == "precomputed":
        if "dir" not in options:
            raise UsageError("precomputed backend needs a directory: precomputed:<dir>")
        return PrecomputedBackend(options["dir"], dim=_int_opt("dim", 512))
    if name == "model":
        from .embedding.model import ModelBackend
        if "audio" not in options and "text" not in options:
            raise UsageError("model backend needs audio=... and/or text=... paths")
        return ModelBackend(
            audio_model=options.get("audio"),
            text_model=options.get("text"),
            tokenizer=options.get("tokenizer"),
            dim=_int_opt("dim", 512),
            sample_rate=_int_opt("sample_rate", 48000),
            max_duration=float(options.get("max_duration", 10.0)),
        )
    raise UsageError(f"unknown backend {name!r} (expected mock, precomputed, or model)")


def _dataclass_from_dict(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise UsageError(f"unknown {where} options: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad {where} options: {exc}") from None


def _pipeline_from_config(data: dict) -> PipelineConfig:
    sections = {
        "feature": FeatureConfig,
        "boundary": BoundaryConfig,
        "activity": ActivityConfig,
        "segment": SegmentConfig,
    }
    unknown = set(data) - set(sections) - {"flag_non_music"}
    if unknown:
        raise UsageError(f"unknown pipeline sections: {sorted(unknown)}")
    kwargs = {}
    for key, cls in sections.items():
        if key in data:
            if not isinstance(data[key], dict):
                raise UsageError(f"pipeline.{key} must be an object")
            kwargs[key] = _dataclass_from_dict(cls, data[key], f"pipeline.{key}")
    if "flag_non_music" in data:
        kwargs["flag_non_music"] = bool(data["flag_non_music"])
    return PipelineConfig(**kwargs)


def _resolve_settings(args) -> dict:
    """Merge config file, environment, and flags for the shared options."""
    settings = {"backend": "mock", "cache": None, "classes": None,
                "workers": 1, "pipeline": {}}
    config_path = getattr(args, "config", None) or os.environ.get(ENV_PREFIX + "CONFIG")
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {config_path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(data) - set(settings)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        settings.update(data)
    for key in _ENV_KEYS:
        value = os.environ.get(ENV_PREFIX + key.upper())
        if value is not None:
            settings[key] = value
    for key in _ENV_KEYS:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            settings[key] = value
    try:
        settings["workers"] = int(settings["workers"])
    except (TypeError, ValueError):
        raise UsageError(f"workers must be an integer, got {settings['workers']!r}") from None
    if settings["workers"] < 1:
        raise UsageError("workers must be >= 1")
    if not isinstance(settings["pipeline"], dict):
        raise UsageError("config key 'pipeline' must be an object")
    return settings


def _build_backend(settings):
    return _parse_backend_spec(str(settings["backend"]))


def _build_cache(settings) -> EmbeddingCache | None:
    return EmbeddingCache(settings["cache"]) if settings["cache"] else None


def _load_classes(settings):
    if settings["classes"]:
        return load_class_config(settings["classes"])
    return default_class_set()


def _emit(args, payload: dict) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        event = payload.get("event")
        if event == "song" and payload.get("status") == "skipped":
            print(f"skipped {payload['path']}: {payload['reason']}", file=sys.stderr)
        elif event == "song":
            print(f"scanned {payload['path']} ({payload['segments']} segments)",
                  file=sys.stderr)
        elif event == "done":
            print(f"done: {payload['songs']} songs, {payload['segments']} segments, "
                  f"{payload['skipped']} skipped", file=sys.stderr)


def _cmd_scan(args) -> int:
    settings = _resolve_settings(args)
    backend = _build_backend(settings)
    cache = _build_cache(settings)
    if cache is None:
        log.warning("scanning without --cache; rescore will not be possible")
    class_set = _load_classes(settings)
    pipeline = _pipeline_from_config(settings["pipeline"])
    library = Path(args.library)
    if not library.is_dir():
        raise UsageError(f"library directory not found: {library}")

    result = catalog_mod.scan_library(
        library, backend, cache, cfg=pipeline, class_set=class_set,
        workers=settings["workers"], progress=lambda ev: _emit(args, ev))
    catalog_mod.save_catalog(result, args.catalog)
    if not getattr(args, "json", False):
        print(f"catalog written to {args.catalog}", file=sys.stderr)
    return 1 if result.skipped else 0


def _check_backend_dim(backend, loaded) -> None:
    if backend.dim != loaded.backend_dim:
        raise UsageError(
            f"backend dim {backend.dim} does not match the catalog's "
            f"{loaded.backend_dim}; pass the backend used for the scan "
            f"(e.g. {loaded.backend_name}:dim={loaded.backend_dim})")


def _cmd_rescore(args) -> int:
    settings = _resolve_settings(args)
    backend = _build_backend(settings)
    cache = _build_cache(settings)
    if cache is None:
        raise UsageError("rescore needs --cache pointing at the scan's embedding cache")
    loaded = catalog_mod.load_catalog(args.catalog)
    _check_backend_dim(backend, loaded)
    class_set = load_class_config(settings["classes"]) if settings["classes"] else None
    updated = catalog_mod.rescore(loaded, backend, cache, class_set=class_set)
    changed = catalog_mod.diff_results(loaded, updated)
    out = args.output or args.catalog
    catalog_mod.save_catalog(updated, out)
    if getattr(args, "json", False):
        print(json.dumps({"event": "rescored", "changed_count": len(changed),
                          "changed": changed, "catalog": str(out)}, sort_keys=True))
    else:
        print(f"rescored {len(updated.results)} segments, "
              f"{len(changed)} changed; catalog written to {out}", file=sys.stderr)
    return 0


def _parse_durations(text: str) -> tuple:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"bad duration list {text!r}; expected e.g. 23,18,13,8,3") from None


def _cmd_ablate(args) -> int:
    settings = _resolve_settings(args)
    backend = _build_backend(settings)
    class_set = _load_classes(settings)
    durations = _parse_durations(args.durations)
    sources = []
    for path in args.audio:
        p = Path(path)
        sources.append((p.name, audio_mod.decode(p)))
    try:
        report = catalog_mod.ablate_durations(sources, durations, class_set,
                                              args.target, backend)
    except CratedigError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    csv_text = catalog_mod.ablation_to_csv(report)
    if args.output:
        Path(args.output).write_text(csv_text, encoding="utf-8")
        print(f"ablation table written to {args.output}", file=sys.stderr)
    else:
        print(csv_text, end="")
    return 0


def _cmd_export(args) -> int:
    loaded = catalog_mod.load_catalog(args.catalog)
    if args.class_id is not None and args.class_id not in loaded.class_set.ids:
        raise UsageError(f"catalog has no class {args.class_id!r}")
    written = catalog_mod.export_segments(loaded, args.out, class_id=args.class_id)
    print(f"wrote {len(written)} segment files to {args.out}", file=sys.stderr)
    return 0


def _cmd_plot_data(args) -> int:
    settings = _resolve_settings(args)
    pipeline = _pipeline_from_config(settings["pipeline"])
    loaded = catalog_mod.load_catalog(args.catalog)
    songs = loaded.songs
    if args.song:
        song = loaded.song_by_id(args.song)
        if song is None:
            raise UsageError(f"catalog has no song {args.song!r}")
        songs = (song,)
    for song in songs:
        buf = audio_mod.decode(Path(song.path))
        timeline, _, _ = catalog_mod.activity_for_song(buf, Path(song.path), pipeline)
        catalog_mod.export_plot_data(song, timeline, args.out)
    print(f"plot data for {len(songs)} songs written to {args.out}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    from .service import ServiceState, build_app

    settings = _resolve_settings(args)
    backend = _build_backend(settings)
    cache = _build_cache(settings)
    if cache is None:
        raise UsageError("serve needs --cache for rescoring")
    pipeline = _pipeline_from_config(settings["pipeline"])
    loaded = catalog_mod.load_catalog(args.catalog)
    _check_backend_dim(backend, loaded)
    state = ServiceState(loaded, backend, cache, pipeline)
    static = Path(args.static) if args.static else None
    if static is not None and not static.is_dir():
        raise UsageError(f"static directory not found: {static}")
    app = build_app(state, static_dir=static)
    import uvicorn
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _add_shared(parser: argparse.ArgumentParser, cache=True, backend=True,
                classes=True, workers=False) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--json", action="store_true",
                        help="emit machine-readable JSON lines on stdout")
    if backend:
        parser.add_argument("--backend",
                            help="mock | precomputed:<dir> | model:audio=...,text=...")
    if cache:
        parser.add_argument("--cache", help="embedding cache directory")
    if classes:
        parser.add_argument("--classes", help="class config JSON file")
    if workers:
        parser.add_argument("--workers", help="parallel analysis threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cratedig",
        description="Scan a music library into a browsable catalog of "
                    "classified, phrase-level segments.")
    parser.add_argument("--version", action="version", version=f"cratedig {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="analyze a library and write a catalog")
    p.add_argument("library", help="directory of audio files")
    p.add_argument("--catalog", required=True, help="output catalog JSON path")
    _add_shared(p, workers=True)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("rescore", help="reclassify a catalog from cached embeddings")
    p.add_argument("--catalog", required=True, help="catalog JSON to rescore")
    p.add_argument("--output", help="write result here instead of overwriting")
    _add_shared(p)
    p.set_defaults(func=_cmd_rescore)

    p = sub.add_parser("ablate", help="classify leading slices at shrinking durations")
    p.add_argument("audio", nargs="+", help="audio clip files")
    p.add_argument("--durations", required=True, help="comma list, e.g. 23,18,13,8,3")
    p.add_argument("--target", required=True, help="target class id")
    p.add_argument("--output", help="write CSV here instead of stdout")
    _add_shared(p, cache=False)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("export", help="cut classified segments to WAV files")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--class", dest="class_id", help="only this class id")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("plot-data", help="write per-song activity/boundary CSVs")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--song", help="only this song id")
    _add_shared(p, cache=False, backend=False, classes=False)
    p.set_defaults(func=_cmd_plot_data)

    p = sub.add_parser("serve", help="serve the catalog over HTTP")
    p.add_argument("--catalog", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", help="directory with the web UI build")
    _add_shared(p)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CratedigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
