import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actiontrace.types import (
    ActionScene,
    ActionType,
    BoundingBox,
    Frame,
    FrameSeries,
    Shot,
    SimilaritySeries,
    TapPrediction,
    TransitionSample,
    UiElement,
    UiHierarchy,
    ValidationError,
    dump_trace_json,
    parse_trace,
    serialize_trace,
)


def _frame(i, h=4, w=4, fps=30.0):
    return Frame(index=i, timestamp_s=i / fps, pixels=np.zeros((h, w, 3), dtype=np.uint8))


def _shot(a, b):
    return Shot(a, b, b)


class TestFrame:
    def test_valid(self):
        f = _frame(0)
        assert f.height == 4 and f.width == 4

    def test_rejects_negative_index(self):
        with pytest.raises(ValidationError):
            Frame(index=-1, timestamp_s=0.0, pixels=np.zeros((2, 2, 3), np.uint8))

    def test_rejects_bad_shape(self):
        with pytest.raises(ValidationError):
            Frame(index=0, timestamp_s=0.0, pixels=np.zeros((2, 2), np.uint8))

    def test_rejects_zero_size(self):
        with pytest.raises(ValidationError):
            Frame(index=0, timestamp_s=0.0, pixels=np.zeros((0, 2, 3), np.uint8))


class TestFrameSeries:
    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            FrameSeries(frames=(), fps=30.0)

    def test_rejects_mixed_dimensions(self):
        with pytest.raises(ValidationError):
            FrameSeries(frames=(_frame(0), _frame(1, h=6)), fps=30.0)

    def test_rejects_nonincreasing_timestamps(self):
        f0 = _frame(0)
        f1 = Frame(index=1, timestamp_s=0.0, pixels=np.zeros((4, 4, 3), np.uint8))
        with pytest.raises(ValidationError):
            FrameSeries(frames=(f0, f1), fps=30.0)

    def test_rejects_timestamp_drift(self):
        f0 = _frame(0)
        f1 = Frame(index=1, timestamp_s=0.5, pixels=np.zeros((4, 4, 3), np.uint8))
        with pytest.raises(ValidationError):
            FrameSeries(frames=(f0, f1), fps=30.0)


class TestSimilaritySeries:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            SimilaritySeries(values=(0.5, 1.2), fps=30.0)

    def test_len(self):
        assert len(SimilaritySeries(values=(0.1, 0.9), fps=30.0)) == 2


class TestShot:
    def test_keyframe_inside(self):
        with pytest.raises(ValidationError):
            Shot(start_frame=0, end_frame=10, keyframe=11)

    def test_order(self):
        with pytest.raises(ValidationError):
            Shot(start_frame=10, end_frame=5, keyframe=7)


class TestBoundingBox:
    def test_rejects_inverted(self):
        with pytest.raises(ValidationError):
            BoundingBox(0.5, 0.1, 0.4, 0.2)
        with pytest.raises(ValidationError):
            BoundingBox(0.1, 0.5, 0.2, 0.4)

    def test_rejects_degenerate(self):
        with pytest.raises(ValidationError):
            BoundingBox(0.3, 0.1, 0.3, 0.2)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            BoundingBox(-0.1, 0.1, 0.5, 0.5)

    def test_contains_is_edge_inclusive(self):
        b = BoundingBox(0.2, 0.2, 0.4, 0.4)
        assert b.contains(0.2, 0.4)
        assert b.contains(0.3, 0.3)
        assert not b.contains(0.41, 0.3)


class TestActionScene:
    def test_tap_location_only_on_tap(self):
        with pytest.raises(ValidationError):
            ActionScene(
                from_shot=_shot(0, 10),
                to_shot=_shot(12, 20),
                action=ActionType.SCROLL,
                tap_location=(0.5, 0.5),
            )

    def test_scroll_offset_only_on_scroll(self):
        with pytest.raises(ValidationError):
            ActionScene(
                from_shot=_shot(0, 10),
                to_shot=_shot(12, 20),
                action=ActionType.TAP,
                scroll_offset=(0.0, -50.0),
            )

    def test_shot_ordering_enforced(self):
        with pytest.raises(ValidationError):
            ActionScene(from_shot=_shot(0, 12), to_shot=_shot(12, 20), action=ActionType.TAP)

    def test_prediction_ranks_must_be_contiguous(self):
        with pytest.raises(ValidationError):
            ActionScene(
                from_shot=_shot(0, 10),
                to_shot=_shot(12, 20),
                action=ActionType.TAP,
                predictions=(TapPrediction(0.5, 0.5, 0.9, 2),),
            )

    def test_prediction_confidences_non_increasing(self):
        with pytest.raises(ValidationError):
            ActionScene(
                from_shot=_shot(0, 10),
                to_shot=_shot(12, 20),
                action=ActionType.TAP,
                predictions=(
                    TapPrediction(0.5, 0.5, 0.3, 1),
                    TapPrediction(0.2, 0.2, 0.9, 2),
                ),
            )


class TestHierarchy:
    def test_nesting_enforced(self):
        child = UiElement("button", BoundingBox(0.0, 0.0, 0.9, 0.9))
        root = UiElement("frame", BoundingBox(0.2, 0.2, 0.8, 0.8), children=(child,))
        with pytest.raises(ValidationError):
            UiHierarchy(root=root)

    def test_shared_node_rejected(self):
        leaf = UiElement("button", BoundingBox(0.1, 0.1, 0.2, 0.2))
        root = UiElement("frame", BoundingBox(0.0, 0.0, 1.0, 1.0), children=(leaf, leaf))
        with pytest.raises(ValidationError):
            UiHierarchy(root=root)

    def test_group_iteration(self):
        tabs = UiElement(
            "tab_bar",
            BoundingBox(0.0, 0.0, 1.0, 0.2),
            group_role="tab",
            children=(UiElement("tab", BoundingBox(0.0, 0.0, 0.5, 0.2)),),
        )
        root = UiElement("frame", BoundingBox(0.0, 0.0, 1.0, 1.0), children=(tabs,))
        assert [g.class_name for g in UiHierarchy(root=root).iter_groups()] == ["tab_bar"]

    def test_unknown_group_role(self):
        with pytest.raises(ValidationError):
            UiElement("x", BoundingBox(0.0, 0.0, 1.0, 1.0), group_role="carousel")


class TestTransitionSample:
    def test_dimension_match_enforced(self):
        with pytest.raises(ValidationError):
            TransitionSample(
                ui1_image=np.zeros((4, 4, 3), np.uint8),
                ui2_image=np.zeros((6, 4, 3), np.uint8),
                gt_bounds=BoundingBox(0.1, 0.1, 0.5, 0.5),
                app_id="a",
            )


# ---------------------------------------------------------------------------
# Trace document round trips


def _tap_scene(a=0, b=30, c=40, d=70, loc=(0.5, 0.5)):
    return ActionScene(
        from_shot=_shot(a, b), to_shot=_shot(c, d), action=ActionType.TAP, tap_location=loc
    )


def test_serialize_empty():
    doc = serialize_trace([], fps=30.0)
    assert doc["scenes"] == [] and doc["fps"] == 30.0
    scenes, fps, _ = parse_trace(doc)
    assert scenes == [] and fps == 30.0


def test_serialize_single_tap():
    doc = serialize_trace([_tap_scene()], fps=30.0)
    assert doc["scenes"][0]["action"] == "TAP"
    assert doc["scenes"][0]["tap_location"] == [0.5, 0.5]


def test_overlapping_shots_rejected_with_pair_named():
    s1 = _tap_scene(0, 30, 40, 70)
    s2 = _tap_scene(35, 60, 65, 90)  # from_shot starts inside s1's to_shot
    with pytest.raises(ValidationError, match="scenes 0 and 1"):
        serialize_trace([s1, s2], fps=30.0)


def test_out_of_order_scenes_rejected():
    s1 = _tap_scene(40, 60, 70, 90)
    s2 = _tap_scene(0, 10, 20, 30)
    with pytest.raises(ValidationError, match="out of order"):
        serialize_trace([s1, s2], fps=30.0)


def test_unknown_schema_version_rejected():
    doc = serialize_trace([], fps=30.0)
    doc["schema_version"] = 99
    with pytest.raises(ValidationError):
        parse_trace(doc)


@st.composite
def scene_chains(draw):
    """Chained random valid scenes sharing shots like the segmenter emits."""
    n = draw(st.integers(min_value=1, max_value=8))
    shots = []
    cursor = 0
    for _ in range(n + 1):
        start = cursor
        end = start + draw(st.integers(min_value=1, max_value=40))
        shots.append(Shot(start, end, end))
        cursor = end + draw(st.integers(min_value=1, max_value=10))
    scenes = []
    for prev, nxt in zip(shots, shots[1:]):
        action = draw(st.sampled_from(list(ActionType)))
        loc = None
        offset = None
        if action is ActionType.TAP and draw(st.booleans()):
            loc = (
                draw(st.floats(min_value=0, max_value=1, allow_nan=False)),
                draw(st.floats(min_value=0, max_value=1, allow_nan=False)),
            )
        if action is ActionType.SCROLL and draw(st.booleans()):
            offset = (0.0, float(draw(st.integers(min_value=-300, max_value=300))))
        preds = tuple(
            TapPrediction(0.5, 0.5, round(1.0 - 0.1 * r, 3), r + 1)
            for r in range(draw(st.integers(min_value=0, max_value=3)))
        )
        scenes.append(
            ActionScene(
                from_shot=prev,
                to_shot=nxt,
                action=action,
                tap_location=loc,
                scroll_offset=offset,
                confidence=draw(st.floats(min_value=0, max_value=1, allow_nan=False)),
                predictions=preds if action is ActionType.TAP else (),
            )
        )
    return scenes


@settings(max_examples=100, deadline=None)
@given(scene_chains())
def test_round_trip_property(scenes):
    doc = serialize_trace(scenes, fps=30.0, source_id="fuzz")
    text = dump_trace_json(doc)
    import json

    parsed_scenes, fps, source_id = parse_trace(json.loads(text))
    assert parsed_scenes == list(scenes)
    assert fps == 30.0 and source_id == "fuzz"
    # a second serialization of the parsed value is byte-identical
    assert dump_trace_json(serialize_trace(parsed_scenes, fps=fps, source_id=source_id)) == text
