"""Zero-shot segment classification against text-described classes.

Each class is described by one or more prompts; prompt embeddings are
averaged and renormalized into a class anchor.  A segment's logits are
signed cosines against the anchors, and probabilities come from a
temperature softmax over ``logit_scale * cosine``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .embedding import Embedding, EncoderBackend, embed_text
from .errors import (
    DegenerateAnchorError,
    DimMismatchError,
    InvalidScaleError,
    SchemaViolationError,
)

DEFAULT_LOGIT_SCALE = 100.0
_ANCHOR_NORM_FLOOR = 1e-8


@dataclass(frozen=True)
class ToolClass:
    """One target class: stable id, human label, describing prompts."""

    id: str
    display_name: str
    prompts: tuple
    anchor: Embedding | None = None

    def __post_init__(self):
        if not self.id or not self.id.strip():
            raise ValueError("class id must be nonempty")
        prompts = tuple(str(p) for p in self.prompts)
        if not prompts or any(not p.strip() for p in prompts):
            raise ValueError(f"class {self.id!r} needs at least one nonempty prompt")
        object.__setattr__(self, "prompts", prompts)


@dataclass(frozen=True)
class ClassSet:
    """An ordered set of at least two classes plus the softmax scale."""

    classes: tuple
    logit_scale: float = DEFAULT_LOGIT_SCALE

    def __post_init__(self):
        classes = tuple(self.classes)
        if len(classes) < 2:
            raise ValueError(f"need at least 2 classes, got {len(classes)}")
        ids = [c.id for c in classes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate class ids: {sorted(ids)}")
        scale = float(self.logit_scale)
        if not np.isfinite(scale) or scale <= 0.0:
            raise InvalidScaleError(f"logit_scale must be positive, got {self.logit_scale}")
        dims = {c.anchor.dim for c in classes if c.anchor is not None}
        if len(dims) > 1:
            raise DimMismatchError(f"anchors disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "logit_scale", scale)

    @property
    def ids(self) -> tuple:
        return tuple(c.id for c in self.classes)

    @property
    def has_anchors(self) -> bool:
        return all(c.anchor is not None for c in self.classes)

    def __len__(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class Classification:
    """Per-segment scores: cosine logits, softmax probs, argmax winner."""

    class_ids: tuple
    logits: tuple
    probs: tuple
    predicted: str


def class_anchor(backend: EncoderBackend, cls: ToolClass) -> Embedding:
    """Mean of the class's prompt embeddings, renormalized.

    A near-zero mean (prompts that cancel out) cannot be normalized and
    raises DegenerateAnchorError naming the class.
    """
    vectors = [embed_text(backend, p).vector.astype(np.float64) for p in cls.prompts]
    mean = np.mean(vectors, axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < _ANCHOR_NORM_FLOOR:
        raise DegenerateAnchorError(
            f"prompts for class {cls.id!r} average to a near-zero vector "
            f"(norm {norm:.3e})", class_id=cls.id)
    return Embedding((mean / norm).astype(np.float32), "text")


def with_anchors(class_set: ClassSet, backend: EncoderBackend) -> ClassSet:
    """Compute anchors for every class using the given text encoder."""
    anchored = tuple(replace(c, anchor=class_anchor(backend, c))
                     for c in class_set.classes)
    return ClassSet(anchored, class_set.logit_scale)


def similarity_logits(embedding: Embedding, class_set: ClassSet) -> np.ndarray:
    """Signed cosine of the embedding against each class anchor."""
    if not class_set.has_anchors:
        raise ValueError("class set has no anchors; call with_anchors first")
    anchors = np.stack([c.anchor.vector for c in class_set.classes]).astype(np.float64)
    if anchors.shape[1] != embedding.dim:
        raise DimMismatchError(
            f"embedding dim {embedding.dim} != anchor dim {anchors.shape[1]}")
    logits = anchors @ embedding.vector.astype(np.float64)
    return np.clip(logits, -1.0, 1.0)


def softmax_probs(logits: np.ndarray, logit_scale: float = DEFAULT_LOGIT_SCALE) -> np.ndarray:
    """Temperature softmax over scaled logits, max-subtracted for stability."""
    scale = float(logit_scale)
    if not np.isfinite(scale) or scale <= 0.0:
        raise InvalidScaleError(f"logit_scale must be positive, got {logit_scale}")
    z = scale * np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def classify(embedding: Embedding, class_set: ClassSet) -> Classification:
    """Score one embedding; ties resolve to the lowest class index."""
    logits = similarity_logits(embedding, class_set)
    probs = softmax_probs(logits, class_set.logit_scale)
    winner = int(np.argmax(probs))
    return Classification(
        class_ids=class_set.ids,
        logits=tuple(float(v) for v in logits),
        probs=tuple(float(v) for v in probs),
        predicted=class_set.ids[winner],
    )


def class_set_to_dict(class_set: ClassSet) -> dict:
    return {
        "logit_scale": class_set.logit_scale,
        "classes": [
            {"id": c.id, "display_name": c.display_name, "prompts": list(c.prompts)}
            for c in class_set.classes
        ],
    }


def class_set_from_dict(data: dict) -> ClassSet:
    """Build a ClassSet from parsed JSON; anchors are not included."""
    if not isinstance(data, dict):
        raise SchemaViolationError(f"class config must be an object, got {type(data).__name__}")
    raw_classes = data.get("classes")
    if not isinstance(raw_classes, list):
        raise SchemaViolationError("class config needs a 'classes' array")
    classes = []
    for i, item in enumerate(raw_classes):
        if not isinstance(item, dict):
            raise SchemaViolationError(f"classes[{i}] must be an object")
        unknown = set(item) - {"id", "display_name", "prompts"}
        if unknown:
            raise SchemaViolationError(f"classes[{i}] has unknown fields {sorted(unknown)}")
        try:
            cid = item["id"]
            prompts = item["prompts"]
        except KeyError as exc:
            raise SchemaViolationError(f"classes[{i}] is missing {exc.args[0]!r}") from None
        if not isinstance(cid, str) or not isinstance(prompts, list) \
                or not all(isinstance(p, str) for p in prompts):
            raise SchemaViolationError(f"classes[{i}] has wrong field types")
        display = item.get("display_name", cid)
        if not isinstance(display, str):
            raise SchemaViolationError(f"classes[{i}].display_name must be a string")
        try:
            classes.append(ToolClass(id=cid, display_name=display, prompts=tuple(prompts)))
        except ValueError as exc:
            raise SchemaViolationError(f"classes[{i}]: {exc}") from None
    scale = data.get("logit_scale", DEFAULT_LOGIT_SCALE)
    if not isinstance(scale, (int, float)) or isinstance(scale, bool):
        raise SchemaViolationError("logit_scale must be a number")
    try:
        return ClassSet(tuple(classes), float(scale))
    except (ValueError, InvalidScaleError) as exc:
        if isinstance(exc, InvalidScaleError):
            raise
        raise SchemaViolationError(str(exc)) from None


def load_class_config(path: Path | str) -> ClassSet:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolationError(f"class config {path} is not valid JSON: {exc}") from None
    return class_set_from_dict(data)


def save_class_config(class_set: ClassSet, path: Path | str) -> None:
    payload = json.dumps(class_set_to_dict(class_set), indent=2, sort_keys=True) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def default_class_set() -> ClassSet:
    """The six built-in DJ-tool classes."""
    text = resources.files("cratedig.data").joinpath("default_classes.json").read_text("utf-8")
    return class_set_from_dict(json.loads(text))
