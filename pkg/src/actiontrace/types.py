"""Shared domain types and the action-trace JSON schema.

Everything downstream (shot detection, segmentation, the tap model, the
annotation service) speaks in terms of these values. All instances are
immutable after construction and validate their invariants up front;
invalid values are rejected, never repaired.

Coordinate convention: locations and bounding boxes are normalized to
[0, 1] by frame width/height so a trace is resolution-independent.
Scroll offsets stay in pixels because scroll distance is bound to the
recorded resolution.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

TRACE_SCHEMA_VERSION = 1


class ValidationError(ValueError):
    """Raised when a domain value violates its invariants."""


class ActionType(Enum):
    TAP = "TAP"
    SCROLL = "SCROLL"
    BACKWARD = "BACKWARD"


@dataclass(frozen=True)
class Frame:
    """One decoded video frame: RGB raster plus its position in time."""

    index: int
    timestamp_s: float
    pixels: np.ndarray  # H x W x 3, uint8

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"frame index must be >= 0, got {self.index}")
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"pixels must be HxWx3, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError(f"frame must be at least 1x1, got {px.shape[:2]}")
        if px.dtype != np.uint8:
            raise ValidationError(f"pixels must be uint8, got {px.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class FrameSeries:
    """An ordered, uniformly sized sequence of frames from one recording."""

    frames: tuple[Frame, ...]
    fps: float
    source_id: str = ""

    def __post_init__(self):
        if not self.frames:
            raise ValidationError("a frame series cannot be empty")
        if self.fps <= 0:
            raise ValidationError(f"fps must be > 0, got {self.fps}")
        object.__setattr__(self, "frames", tuple(self.frames))
        h, w = self.frames[0].height, self.frames[0].width
        period = 1.0 / self.fps
        prev_ts = None
        for f in self.frames:
            if (f.height, f.width) != (h, w):
                raise ValidationError(
                    f"frame {f.index} is {f.height}x{f.width}, expected {h}x{w}"
                )
            if prev_ts is not None and f.timestamp_s <= prev_ts:
                raise ValidationError(
                    f"timestamps must strictly increase (frame {f.index})"
                )
            if abs(f.timestamp_s - f.index / self.fps) > period:
                raise ValidationError(
                    f"frame {f.index} timestamp {f.timestamp_s:.4f}s deviates from "
                    f"index/fps by more than one frame period"
                )
            prev_ts = f.timestamp_s

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width


@dataclass(frozen=True)
class SimilaritySeries:
    """Per-consecutive-pair similarity scores; entry i compares frames i and i+1."""

    values: tuple[float, ...]
    fps: float

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.fps <= 0:
            raise ValidationError(f"fps must be > 0, got {self.fps}")
        for i, v in enumerate(self.values):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"similarity value {v} at {i} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Shot:
    """A maximal steady interval of frames showing one fully rendered UI.

    ``start_frame``/``end_frame`` are inclusive; ``keyframe`` is the
    representative frame index (by default the last frame, where the UI
    is most fully loaded).
    """

    start_frame: int
    end_frame: int
    keyframe: int

    def __post_init__(self):
        if self.start_frame < 0:
            raise ValidationError(f"start_frame must be >= 0, got {self.start_frame}")
        if not self.start_frame <= self.keyframe <= self.end_frame:
            raise ValidationError(
                f"need start <= keyframe <= end, got "
                f"({self.start_frame}, {self.keyframe}, {self.end_frame})"
            )


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized [0, 1] coordinates."""

    x_lower: float
    y_lower: float
    x_upper: float
    y_upper: float

    def __post_init__(self):
        for name in ("x_lower", "y_lower", "x_upper", "y_upper"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name}={v} outside [0, 1]")
        if not self.x_lower < self.x_upper:
            raise ValidationError(
                f"x_lower must be < x_upper, got {self.x_lower} >= {self.x_upper}"
            )
        if not self.y_lower < self.y_upper:
            raise ValidationError(
                f"y_lower must be < y_upper, got {self.y_lower} >= {self.y_upper}"
            )

    def contains(self, x: float, y: float) -> bool:
        """Inclusive on all edges: a point exactly on the boundary counts."""
        return self.x_lower <= x <= self.x_upper and self.y_lower <= y <= self.y_upper

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_lower + self.x_upper) / 2.0, (self.y_lower + self.y_upper) / 2.0)


@dataclass(frozen=True)
class TapPrediction:
    """One ranked tap-location candidate after post-processing."""

    x: float
    y: float
    confidence: float
    rank: int

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0 or not 0.0 <= self.y <= 1.0:
            raise ValidationError(f"coordinates ({self.x}, {self.y}) outside [0, 1]")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")


def validate_prediction_list(preds: Sequence[TapPrediction]) -> None:
    """Ranks must be contiguous from 1 and confidences non-increasing."""
    for i, p in enumerate(preds):
        if p.rank != i + 1:
            raise ValidationError(f"ranks not contiguous: position {i} has rank {p.rank}")
        if i > 0 and p.confidence > preds[i - 1].confidence:
            raise ValidationError(
                f"confidence increases from rank {i} to {i + 1} "
                f"({preds[i - 1].confidence} -> {p.confidence})"
            )


@dataclass(frozen=True)
class ActionScene:
    """A typed transition between two consecutive shots.

    ``tap_location`` may only be carried by TAP scenes and ``scroll_offset``
    only by SCROLL scenes; either may be absent (locations are filled in
    downstream of segmentation, offsets are absent when template matching
    found no confident peak).
    """

    from_shot: Shot
    to_shot: Shot
    action: ActionType
    tap_location: Optional[tuple[float, float]] = None
    scroll_offset: Optional[tuple[float, float]] = None
    confidence: float = 1.0
    predictions: tuple[TapPrediction, ...] = ()

    def __post_init__(self):
        if self.from_shot.end_frame >= self.to_shot.start_frame:
            raise ValidationError(
                f"from_shot must end before to_shot starts "
                f"({self.from_shot.end_frame} >= {self.to_shot.start_frame})"
            )
        if self.tap_location is not None:
            if self.action is not ActionType.TAP:
                raise ValidationError(f"tap_location not allowed on {self.action.value}")
            x, y = self.tap_location
            if not 0.0 <= x <= 1.0 or not 0.0 <= y <= 1.0:
                raise ValidationError(f"tap_location ({x}, {y}) outside [0, 1]^2")
            object.__setattr__(self, "tap_location", (float(x), float(y)))
        if self.scroll_offset is not None:
            if self.action is not ActionType.SCROLL:
                raise ValidationError(f"scroll_offset not allowed on {self.action.value}")
            dx, dy = self.scroll_offset
            object.__setattr__(self, "scroll_offset", (float(dx), float(dy)))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        object.__setattr__(self, "predictions", tuple(self.predictions))
        validate_prediction_list(self.predictions)


@dataclass(frozen=True)
class UiElement:
    """A node of a view hierarchy: class, normalized bounds, optional text/role."""

    class_name: str
    bounds: BoundingBox
    text: Optional[str] = None
    group_role: Optional[str] = None  # one of "list", "tab", "card", "frame"
    children: tuple["UiElement", ...] = ()

    _GROUP_ROLES = ("list", "tab", "card", "frame")

    def __post_init__(self):
        if self.group_role is not None and self.group_role not in self._GROUP_ROLES:
            raise ValidationError(f"unknown group_role {self.group_role!r}")
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class UiHierarchy:
    """Element tree for one screen; child bounds must nest within parents."""

    root: UiElement
    nesting_tolerance: float = 0.02

    def __post_init__(self):
        seen: set[int] = set()
        tol = self.nesting_tolerance

        def walk(node: UiElement):
            if id(node) in seen:
                raise ValidationError("hierarchy contains a shared/cyclic node")
            seen.add(id(node))
            b = node.bounds
            for child in node.children:
                c = child.bounds
                if (
                    c.x_lower < b.x_lower - tol
                    or c.y_lower < b.y_lower - tol
                    or c.x_upper > b.x_upper + tol
                    or c.y_upper > b.y_upper + tol
                ):
                    raise ValidationError(
                        f"child bounds {c} escape parent bounds {b} beyond tolerance {tol}"
                    )
                walk(child)

        walk(self.root)

    def iter_groups(self):
        """Yield every element that declares a group role."""

        def walk(node: UiElement):
            if node.group_role is not None:
                yield node
            for child in node.children:
                yield from walk(child)

        yield from walk(self.root)


@dataclass(frozen=True)
class TransitionSample:
    """One (UI-1 -> UI-2) record with the ground-truth tapped element bounds."""

    ui1_image: np.ndarray  # H x W x 3 uint8
    ui2_image: np.ndarray
    gt_bounds: BoundingBox
    app_id: str
    hierarchy: Optional[UiHierarchy] = None
    origin: str = "source"  # "source" | "exchange" | "exchange-context" | "metamorphic"

    def __post_init__(self):
        for name in ("ui1_image", "ui2_image"):
            img = getattr(self, name)
            if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
                raise ValidationError(f"{name} must be HxWx3 uint8, got {img.shape} {img.dtype}")
        if self.ui1_image.shape != self.ui2_image.shape:
            raise ValidationError(
                f"UI images must share dimensions, got "
                f"{self.ui1_image.shape} vs {self.ui2_image.shape}"
            )


# ---------------------------------------------------------------------------
# Action-trace document (de)serialization


def _shot_to_dict(s: Shot) -> dict:
    return {"start_frame": s.start_frame, "end_frame": s.end_frame, "keyframe": s.keyframe}


def _shot_from_dict(d: dict) -> Shot:
    return Shot(d["start_frame"], d["end_frame"], d["keyframe"])


def _scene_to_dict(sc: ActionScene) -> dict:
    return {
        "from_shot": _shot_to_dict(sc.from_shot),
        "to_shot": _shot_to_dict(sc.to_shot),
        "action": sc.action.value,
        "tap_location": list(sc.tap_location) if sc.tap_location is not None else None,
        "scroll_offset": list(sc.scroll_offset) if sc.scroll_offset is not None else None,
        "confidence": sc.confidence,
        "predictions": [
            {"x": p.x, "y": p.y, "confidence": p.confidence, "rank": p.rank}
            for p in sc.predictions
        ],
    }


def _scene_from_dict(d: dict) -> ActionScene:
    return ActionScene(
        from_shot=_shot_from_dict(d["from_shot"]),
        to_shot=_shot_from_dict(d["to_shot"]),
        action=ActionType(d["action"]),
        tap_location=tuple(d["tap_location"]) if d.get("tap_location") else None,
        scroll_offset=tuple(d["scroll_offset"]) if d.get("scroll_offset") else None,
        confidence=d.get("confidence", 1.0),
        predictions=tuple(
            TapPrediction(p["x"], p["y"], p["confidence"], p["rank"])
            for p in d.get("predictions", [])
        ),
    )


def serialize_trace(
    scenes: Sequence[ActionScene],
    fps: float,
    source_id: str = "",
    metadata: Optional[dict] = None,
) -> dict:
    """Build the JSON-ready action-trace document for a recording.

    Scenes must be ordered by ``from_shot`` and their shots must not
    overlap; violations raise :class:`ValidationError` naming the
    offending pair.
    """
    scenes = list(scenes)
    for i in range(1, len(scenes)):
        prev, cur = scenes[i - 1], scenes[i]
        if cur.from_shot.start_frame < prev.from_shot.start_frame:
            raise ValidationError(f"scenes {i - 1} and {i} are out of order")
        if cur.from_shot.start_frame <= prev.to_shot.end_frame and not (
            cur.from_shot == prev.to_shot
        ):
            raise ValidationError(f"scenes {i - 1} and {i} have overlapping shots")
    doc = {
        "schema_version": TRACE_SCHEMA_VERSION,
        "source_id": source_id,
        "fps": fps,
        "scenes": [_scene_to_dict(s) for s in scenes],
    }
    if metadata:
        doc["metadata"] = metadata
    return doc


def parse_trace(doc: dict) -> tuple[list[ActionScene], float, str]:
    """Inverse of :func:`serialize_trace`; returns (scenes, fps, source_id)."""
    version = doc.get("schema_version")
    if version != TRACE_SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported trace schema_version {version!r}, expected {TRACE_SCHEMA_VERSION}"
        )
    scenes = [_scene_from_dict(d) for d in doc["scenes"]]
    return scenes, float(doc["fps"]), doc.get("source_id", "")


def dump_trace_json(doc: dict) -> str:
    """Canonical byte-stable JSON rendering used for every persisted artifact."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"
