"""Loading recordings and persisting datasets.

Recordings come in two forms: a standard video container (decoded through
OpenCV) or a directory of numbered PNG frames with an ``fps.json``
sidecar. The PNG form keeps everything testable without codecs and is
what the synthetic corpus writes.

Transition datasets persist as a manifest JSON plus PNG pairs; the
manifest embeds ground-truth bounds, app ids and (optionally) the view
hierarchy of UI-1.
"""
from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np

from .types import (
    BoundingBox,
    Frame,
    FrameSeries,
    TransitionSample,
    UiElement,
    UiHierarchy,
    ValidationError,
)

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
_FRAME_RE = re.compile(r"^(\d+)\.png$")


class VideoReadError(RuntimeError):
    pass


def load_video(path: str | Path) -> FrameSeries:
    """Decode a recording from a container file or a numbered-PNG directory."""
    p = Path(path)
    if p.is_dir():
        return _load_frame_dir(p)
    if not p.exists():
        raise VideoReadError(f"no such video: {p}")
    return _load_container(p)


def _load_frame_dir(p: Path) -> FrameSeries:
    sidecar = p / "fps.json"
    if not sidecar.exists():
        raise VideoReadError(f"frame directory {p} is missing its fps.json sidecar")
    meta = json.loads(sidecar.read_text())
    fps = float(meta["fps"])
    entries = []
    for child in p.iterdir():
        m = _FRAME_RE.match(child.name)
        if m:
            entries.append((int(m.group(1)), child))
    if not entries:
        raise VideoReadError(f"frame directory {p} contains no numbered PNG frames")
    entries.sort()
    frames = []
    for i, (num, child) in enumerate(entries):
        if num != i:
            raise VideoReadError(f"frame numbering has a gap: expected {i}, found {num}")
        bgr = cv2.imread(str(child), cv2.IMREAD_COLOR)
        if bgr is None:
            raise VideoReadError(f"cannot decode frame {child}")
        frames.append(Frame(index=i, timestamp_s=i / fps, pixels=bgr[:, :, ::-1].copy()))
    return FrameSeries(frames=tuple(frames), fps=fps, source_id=meta.get("source_id", p.name))


def _load_container(p: Path) -> FrameSeries:
    cap = cv2.VideoCapture(str(p))
    if not cap.isOpened():
        raise VideoReadError(f"cannot open video container {p}")
    fps = cap.get(cv2.CAP_PROP_FPS)
    if not fps or fps <= 0:
        fps = 30.0
        logger.warning("container %s reports no fps; assuming %.1f", p, fps)
    frames = []
    i = 0
    while True:
        ok, bgr = cap.read()
        if not ok:
            break
        frames.append(Frame(index=i, timestamp_s=i / fps, pixels=bgr[:, :, ::-1].copy()))
        i += 1
    cap.release()
    if not frames:
        raise VideoReadError(f"no frames decoded from {p}")
    return FrameSeries(frames=tuple(frames), fps=float(fps), source_id=p.stem)


def save_video_frames(video: FrameSeries, out_dir: str | Path) -> Path:
    """Write a frame series as the numbered-PNG directory format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for f in video.frames:
        cv2.imwrite(str(out / f"{f.index:06d}.png"), f.pixels[:, :, ::-1])
    (out / "fps.json").write_text(
        json.dumps({"fps": video.fps, "source_id": video.source_id}, sort_keys=True) + "\n"
    )
    return out


# ---------------------------------------------------------------------------
# Dataset manifests


def _element_to_dict(el: UiElement) -> dict:
    return {
        "class_name": el.class_name,
        "bounds": [el.bounds.x_lower, el.bounds.y_lower, el.bounds.x_upper, el.bounds.y_upper],
        "text": el.text,
        "group_role": el.group_role,
        "children": [_element_to_dict(c) for c in el.children],
    }


def _element_from_dict(d: dict) -> UiElement:
    return UiElement(
        class_name=d["class_name"],
        bounds=BoundingBox(*d["bounds"]),
        text=d.get("text"),
        group_role=d.get("group_role"),
        children=tuple(_element_from_dict(c) for c in d.get("children", [])),
    )


def save_dataset(samples: Sequence[TransitionSample], out_dir: str | Path) -> Path:
    """Persist samples as PNG pairs plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    images = out / "images"
    images.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        ui1_rel = f"images/{i:05d}_ui1.png"
        ui2_rel = f"images/{i:05d}_ui2.png"
        cv2.imwrite(str(out / ui1_rel), s.ui1_image[:, :, ::-1])
        cv2.imwrite(str(out / ui2_rel), s.ui2_image[:, :, ::-1])
        entries.append(
            {
                "ui1": ui1_rel,
                "ui2": ui2_rel,
                "gt_bounds": [
                    s.gt_bounds.x_lower,
                    s.gt_bounds.y_lower,
                    s.gt_bounds.x_upper,
                    s.gt_bounds.y_upper,
                ],
                "app_id": s.app_id,
                "origin": s.origin,
                "hierarchy": _element_to_dict(s.hierarchy.root) if s.hierarchy else None,
            }
        )
    manifest = {"schema_version": MANIFEST_SCHEMA_VERSION, "samples": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


def load_dataset(manifest_path: str | Path) -> list[TransitionSample]:
    p = Path(manifest_path)
    doc = json.loads(p.read_text())
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported manifest schema_version {version!r}, expected {MANIFEST_SCHEMA_VERSION}"
        )
    base = p.parent
    samples = []
    for e in doc["samples"]:
        ui1 = cv2.imread(str(base / e["ui1"]), cv2.IMREAD_COLOR)
        ui2 = cv2.imread(str(base / e["ui2"]), cv2.IMREAD_COLOR)
        if ui1 is None or ui2 is None:
            raise ValidationError(f"cannot read images for manifest entry {e['ui1']}")
        hierarchy = None
        if e.get("hierarchy"):
            hierarchy = UiHierarchy(root=_element_from_dict(e["hierarchy"]))
        samples.append(
            TransitionSample(
                ui1_image=ui1[:, :, ::-1].copy(),
                ui2_image=ui2[:, :, ::-1].copy(),
                gt_bounds=BoundingBox(*e["gt_bounds"]),
                app_id=e["app_id"],
                hierarchy=hierarchy,
                origin=e.get("origin", "source"),
            )
        )
    return samples
