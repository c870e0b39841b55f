"""cratedig: zero-shot crate digging for music libraries.

Scans audio files, cuts them into phrase-level segments at structural
boundaries, classifies every segment against text-described DJ-tool
classes in a shared audio/text embedding space, and persists the result
as a browsable, re-scorable catalog.
"""

__version__ = "0.1.0"

from .audio import AudioBuffer, decode, export_wav, resample, slice_buffer
from .catalog import (
    Catalog,
    PipelineConfig,
    SongRecord,
    ablate_durations,
    analyze_song,
    load_catalog,
    rescore,
    save_catalog,
    scan_library,
)
from .classifier import (
    ClassSet,
    Classification,
    ToolClass,
    classify,
    default_class_set,
    with_anchors,
)
from .embedding import Embedding, EmbeddingCache, EncoderBackend, MockBackend
from .errors import CratedigError

__all__ = [
    "__version__",
    "AudioBuffer", "decode", "resample", "slice_buffer", "export_wav",
    "Catalog", "PipelineConfig", "SongRecord",
    "scan_library", "analyze_song", "rescore", "ablate_durations",
    "save_catalog", "load_catalog",
    "ClassSet", "ToolClass", "Classification", "classify",
    "default_class_set", "with_anchors",
    "Embedding", "EmbeddingCache", "EncoderBackend", "MockBackend",
    "CratedigError",
]
