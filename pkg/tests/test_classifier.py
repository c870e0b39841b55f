"""Zero-shot classification: anchors, cosine logits, softmax, config I/O."""

import json
import math

import numpy as np
import pytest

from cratedig.classifier import (
    DEFAULT_LOGIT_SCALE,
    Classification,
    ClassSet,
    ToolClass,
    class_anchor,
    class_set_from_dict,
    class_set_to_dict,
    classify,
    default_class_set,
    load_class_config,
    save_class_config,
    similarity_logits,
    softmax_probs,
    with_anchors,
)
from cratedig.embedding import Embedding, MockBackend, embed_text
from cratedig.errors import (
    DegenerateAnchorError,
    DimMismatchError,
    InvalidScaleError,
    SchemaViolationError,
)


def unit_embedding(dim, axis, kind="text"):
    v = np.zeros(dim, dtype=np.float32)
    v[axis] = 1.0
    return Embedding(v, kind)


def anchored_set(anchors, scale=DEFAULT_LOGIT_SCALE):
    classes = tuple(
        ToolClass(id=f"c{i}", display_name=f"C{i}", prompts=(f"p{i}",), anchor=a)
        for i, a in enumerate(anchors)
    )
    return ClassSet(classes, scale)


def naive_softmax(logits, scale):
    """Independent direct-formula reference (no max subtraction)."""
    weights = [math.exp(scale * x) for x in logits]
    total = sum(weights)
    return [w / total for w in weights]


# ------------------------------------------------------------------ dataclass


def test_tool_class_validation():
    with pytest.raises(ValueError):
        ToolClass(id="", display_name="x", prompts=("p",))
    with pytest.raises(ValueError):
        ToolClass(id="a", display_name="x", prompts=())
    with pytest.raises(ValueError):
        ToolClass(id="a", display_name="x", prompts=("ok", "  "))


def test_class_set_validation():
    c = lambda i: ToolClass(id=f"c{i}", display_name="x", prompts=("p",))
    with pytest.raises(ValueError):
        ClassSet((c(0),))
    with pytest.raises(ValueError):
        ClassSet((c(0), ToolClass(id="c0", display_name="y", prompts=("q",))))
    for bad_scale in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(InvalidScaleError):
            ClassSet((c(0), c(1)), bad_scale)
    with pytest.raises(DimMismatchError):
        anchored_set([unit_embedding(8, 0), unit_embedding(16, 0)])


def test_class_set_accessors():
    cs = anchored_set([unit_embedding(8, 0), unit_embedding(8, 1)])
    assert cs.ids == ("c0", "c1")
    assert len(cs) == 2
    assert cs.has_anchors
    bare = ClassSet((
        ToolClass(id="a", display_name="A", prompts=("p",)),
        ToolClass(id="b", display_name="B", prompts=("q",)),
    ))
    assert not bare.has_anchors


# -------------------------------------------------------------------- anchors


def test_single_prompt_anchor_equals_prompt_embedding():
    backend = MockBackend(dim=32)
    cls = ToolClass(id="a", display_name="A", prompts=("drum break",))
    anchor = class_anchor(backend, cls)
    np.testing.assert_allclose(anchor.vector,
                               embed_text(backend, "drum break").vector,
                               atol=1e-6)


def test_multi_prompt_anchor_is_renormalized_mean():
    backend = MockBackend(dim=32)
    prompts = ("drum break", "percussion loop", "breakbeat")
    cls = ToolClass(id="a", display_name="A", prompts=prompts)
    anchor = class_anchor(backend, cls)
    vectors = [embed_text(backend, p).vector.astype(np.float64) for p in prompts]
    mean = np.mean(vectors, axis=0)
    np.testing.assert_allclose(anchor.vector, mean / np.linalg.norm(mean), atol=1e-6)
    np.testing.assert_allclose(np.linalg.norm(anchor.vector), 1.0, atol=1e-6)


def test_cancelling_prompts_raise_degenerate_anchor():
    class Flipper(MockBackend):
        """Second prompt embeds to the negation of the first."""

        def _encode_text(self, prompt):
            base = super()._encode_text("fixed")
            return -base if prompt == "anti" else base

    cls = ToolClass(id="bad", display_name="Bad", prompts=("pro", "anti"))
    with pytest.raises(DegenerateAnchorError) as info:
        class_anchor(Flipper(dim=16), cls)
    assert info.value.class_id == "bad"


def test_with_anchors_embeds_every_prompt_once():
    backend = MockBackend(dim=32)
    cs = ClassSet((
        ToolClass(id="a", display_name="A", prompts=("one", "two")),
        ToolClass(id="b", display_name="B", prompts=("three",)),
    ))
    out = with_anchors(cs, backend)
    assert out.has_anchors
    assert backend.text_calls == 3
    assert out.ids == cs.ids
    assert not cs.has_anchors  # original untouched


# --------------------------------------------------------------------- logits


def test_logits_are_signed_cosines():
    a0 = unit_embedding(8, 0)
    a1 = unit_embedding(8, 1)
    cs = anchored_set([a0, a1])
    anti = Embedding(-a0.vector, "audio")
    np.testing.assert_allclose(similarity_logits(a0, cs), [1.0, 0.0], atol=1e-7)
    np.testing.assert_allclose(similarity_logits(anti, cs), [-1.0, 0.0], atol=1e-7)


def test_logits_clip_rounding_overshoot():
    v = np.ones(8, dtype=np.float32)
    v /= np.linalg.norm(v)
    cs = anchored_set([Embedding(v, "text"), unit_embedding(8, 0)])
    logits = similarity_logits(Embedding(v, "audio"), cs)
    assert logits[0] <= 1.0
    assert logits[0] == pytest.approx(1.0, abs=1e-6)


def test_logits_require_anchors_and_matching_dim():
    bare = ClassSet((
        ToolClass(id="a", display_name="A", prompts=("p",)),
        ToolClass(id="b", display_name="B", prompts=("q",)),
    ))
    with pytest.raises(ValueError):
        similarity_logits(unit_embedding(8, 0, "audio"), bare)
    cs = anchored_set([unit_embedding(8, 0), unit_embedding(8, 1)])
    with pytest.raises(DimMismatchError):
        similarity_logits(unit_embedding(16, 0, "audio"), cs)


# -------------------------------------------------------------------- softmax


def test_softmax_matches_direct_formula():
    rng = np.random.default_rng(3)
    for _ in range(200):
        logits = rng.uniform(-1.0, 1.0, size=rng.integers(2, 9))
        scale = float(rng.uniform(0.5, 120.0))
        got = softmax_probs(logits, scale)
        np.testing.assert_allclose(got, naive_softmax(logits, scale), rtol=1e-12)
        assert got.sum() == pytest.approx(1.0, abs=1e-9)
        assert (got > 0).all()


def test_softmax_is_stable_at_extremes():
    probs = softmax_probs(np.array([1.0, -1.0, 1.0]), 100.0)
    assert np.isfinite(probs).all()
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(probs[0], probs[2], rtol=1e-12)
    assert probs[1] < 1e-80


def test_softmax_uniform_on_equal_logits():
    probs = softmax_probs(np.zeros(5), 37.0)
    np.testing.assert_allclose(probs, np.full(5, 0.2), rtol=1e-12)


def test_softmax_rejects_bad_scale():
    for bad in (0.0, -3.0, float("inf"), float("nan")):
        with pytest.raises(InvalidScaleError):
            softmax_probs(np.zeros(3), bad)


def test_softmax_is_shift_invariant():
    logits = np.array([0.2, -0.4, 0.9])
    a = softmax_probs(logits, 10.0)
    b = softmax_probs(logits + 5.0, 10.0)
    np.testing.assert_allclose(a, b, rtol=1e-12)


# ------------------------------------------------------------------- classify


def test_classify_picks_nearest_anchor():
    cs = anchored_set([unit_embedding(8, i) for i in range(4)])
    for i in range(4):
        got = classify(unit_embedding(8, i, "audio"), cs)
        assert got.predicted == f"c{i}"
        assert got.probs[i] == max(got.probs)
        assert got.class_ids == cs.ids
        assert sum(got.probs) == pytest.approx(1.0, abs=1e-9)


def test_classify_tie_breaks_to_lowest_index():
    shared = unit_embedding(8, 0)
    cs = anchored_set([shared, shared, unit_embedding(8, 1)])
    got = classify(unit_embedding(8, 0, "audio"), cs)
    assert got.logits[0] == got.logits[1]
    assert got.predicted == "c0"


def test_classification_fields_are_plain_tuples():
    cs = anchored_set([unit_embedding(8, 0), unit_embedding(8, 1)])
    got = classify(unit_embedding(8, 0, "audio"), cs)
    assert isinstance(got, Classification)
    assert isinstance(got.logits, tuple)
    assert isinstance(got.probs, tuple)
    assert all(isinstance(v, float) for v in got.logits + got.probs)


def test_classify_mock_end_to_end():
    backend = MockBackend(dim=64)
    cs = with_anchors(ClassSet((
        ToolClass(id="hook", display_name="Hook", prompts=("vocal hook",)),
        ToolClass(id="break", display_name="Break", prompts=("drum break",)),
    )), backend)
    emb = embed_text(backend, "vocal hook")
    got = classify(Embedding(emb.vector, "audio"), cs)
    assert got.predicted == "hook"
    assert got.probs[0] > 0.99


# ------------------------------------------------------------------ config IO


def test_config_round_trip(tmp_path):
    cs = ClassSet((
        ToolClass(id="a", display_name="Class A", prompts=("one", "two")),
        ToolClass(id="b", display_name="Class B", prompts=("three",)),
    ), 42.0)
    path = tmp_path / "classes.json"
    save_class_config(cs, path)
    loaded = load_class_config(path)
    assert loaded.ids == cs.ids
    assert loaded.logit_scale == 42.0
    assert [c.prompts for c in loaded.classes] == [c.prompts for c in cs.classes]
    assert [c.display_name for c in loaded.classes] == ["Class A", "Class B"]
    assert not loaded.has_anchors  # anchors never serialize


def test_dict_round_trip_drops_anchors():
    cs = anchored_set([unit_embedding(8, 0), unit_embedding(8, 1)])
    data = class_set_to_dict(cs)
    assert "anchor" not in json.dumps(data)
    again = class_set_from_dict(data)
    assert again.ids == cs.ids
    assert not again.has_anchors


def test_default_class_set_shape():
    cs = default_class_set()
    assert cs.ids == ("acapella_loops", "sound_effects", "drum_breaks",
                      "melodic_hooks", "dj_drops", "battle_tracks")
    assert cs.logit_scale == 100.0
    assert all(len(c.prompts) >= 1 for c in cs.classes)
    assert not cs.has_anchors


@pytest.mark.parametrize("data", [
    "not a dict",
    {},
    {"classes": "nope"},
    {"classes": [1, 2]},
    {"classes": [{"id": "a", "prompts": ["p"], "extra": 1},
                 {"id": "b", "prompts": ["q"]}]},
    {"classes": [{"prompts": ["p"]}, {"id": "b", "prompts": ["q"]}]},
    {"classes": [{"id": "a"}, {"id": "b", "prompts": ["q"]}]},
    {"classes": [{"id": 3, "prompts": ["p"]}, {"id": "b", "prompts": ["q"]}]},
    {"classes": [{"id": "a", "prompts": "p"}, {"id": "b", "prompts": ["q"]}]},
    {"classes": [{"id": "a", "prompts": [1]}, {"id": "b", "prompts": ["q"]}]},
    {"classes": [{"id": "a", "prompts": ["p"], "display_name": 4},
                 {"id": "b", "prompts": ["q"]}]},
    {"classes": [{"id": "a", "prompts": [" "]}, {"id": "b", "prompts": ["q"]}]},
    {"classes": [{"id": "a", "prompts": ["p"]}]},
    {"classes": [{"id": "a", "prompts": ["p"]},
                 {"id": "b", "prompts": ["q"]}], "logit_scale": "hot"},
])
def test_config_schema_violations(data):
    with pytest.raises(SchemaViolationError):
        class_set_from_dict(data)


def test_config_bad_scale_value_raises_invalid_scale():
    data = {"classes": [{"id": "a", "prompts": ["p"]},
                        {"id": "b", "prompts": ["q"]}],
            "logit_scale": -5.0}
    with pytest.raises(InvalidScaleError):
        class_set_from_dict(data)


def test_load_class_config_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(SchemaViolationError):
        load_class_config(path)
