"""Ingest crowdsourced interaction traces in the Rico layout.

A trace directory is expected to hold::

    <trace>/gestures.json          # {"<screen-id>": [[x, y], ...], ...}
    <trace>/screenshots/<id>.jpg   # or .png
    <trace>/view_hierarchies/<id>.json

Gesture coordinates are normalized to the screen. Single-point gestures
are taps; the tapped element is the deepest visible node containing the
point (clickable nodes preferred). Each tap becomes one transition sample
with the following screen in id order as UI-2. Swipes, unresolvable taps
and malformed traces are skipped and counted, never fatal.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .types import BoundingBox, TransitionSample

logger = logging.getLogger(__name__)


@dataclass
class IngestStats:
    traces: int = 0
    samples: int = 0
    skipped_swipes: int = 0
    skipped_unresolved: int = 0
    skipped_malformed: int = 0
    errors: list[str] = field(default_factory=list)


def _node_bounds(node: dict, screen_w: float, screen_h: float) -> Optional[BoundingBox]:
    raw = node.get("bounds")
    if not raw or len(raw) != 4:
        return None
    x0, y0, x1, y1 = (float(v) for v in raw)
    x0, x1 = max(0.0, x0 / screen_w), min(1.0, x1 / screen_w)
    y0, y1 = max(0.0, y0 / screen_h), min(1.0, y1 / screen_h)
    if x0 >= x1 or y0 >= y1:
        return None
    return BoundingBox(x0, y0, x1, y1)


def _find_tapped(node: dict, x: float, y: float, screen_w: float, screen_h: float):
    """Deepest visible node containing the point; clickable wins over depth."""
    best = None  # (clickable, depth, bounds)

    def walk(n: dict, depth: int):
        nonlocal best
        if not isinstance(n, dict):
            return
        if n.get("visible-to-user", n.get("visibility", "visible") == "visible") is False:
            return
        b = _node_bounds(n, screen_w, screen_h)
        if b is not None and b.contains(x, y):
            clickable = bool(n.get("clickable", False))
            key = (clickable, depth)
            if best is None or key >= (best[0], best[1]):
                best = (clickable, depth, b)
        for child in n.get("children") or []:
            walk(child, depth + 1)

    walk(node, 0)
    return best[2] if best else None


def _screen_size(hierarchy: dict) -> tuple[float, float]:
    # Rico hierarchies carry the device bounds on the root node.
    root = hierarchy.get("activity", {}).get("root", hierarchy.get("root", hierarchy))
    raw = root.get("bounds") if isinstance(root, dict) else None
    if raw and len(raw) == 4 and raw[2] > raw[0] and raw[3] > raw[1]:
        return float(raw[2] - raw[0]), float(raw[3] - raw[1])
    return 1440.0, 2560.0  # Rico capture default


def _root_node(hierarchy: dict) -> Optional[dict]:
    root = hierarchy.get("activity", {}).get("root", hierarchy.get("root"))
    return root if isinstance(root, dict) else None


def _read_screenshot(trace_dir: Path, screen_id: str) -> Optional[np.ndarray]:
    for ext in (".jpg", ".png", ".jpeg"):
        p = trace_dir / "screenshots" / f"{screen_id}{ext}"
        if p.exists():
            bgr = cv2.imread(str(p), cv2.IMREAD_COLOR)
            if bgr is not None:
                return bgr[:, :, ::-1].copy()
    return None


def ingest_rico(trace_root: str | Path) -> tuple[list[TransitionSample], IngestStats]:
    """Collect tap transition samples from every trace under ``trace_root``."""
    root = Path(trace_root)
    stats = IngestStats()
    samples: list[TransitionSample] = []
    trace_dirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not trace_dirs:
        logger.warning("no trace directories under %s", root)
        return samples, stats

    for trace in trace_dirs:
        stats.traces += 1
        gestures_path = trace / "gestures.json"
        try:
            gestures = json.loads(gestures_path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            stats.skipped_malformed += 1
            stats.errors.append(f"{trace.name}: {e}")
            logger.warning("skipping trace %s: %s", trace.name, e)
            continue
        screen_ids = sorted(gestures, key=lambda s: (len(s), s))
        for cur_id, next_id in zip(screen_ids, screen_ids[1:]):
            points = gestures.get(cur_id) or []
            if len(points) != 1:
                if len(points) > 1:
                    stats.skipped_swipes += 1
                continue
            try:
                hierarchy = json.loads((trace / "view_hierarchies" / f"{cur_id}.json").read_text())
            except (OSError, json.JSONDecodeError):
                stats.skipped_unresolved += 1
                continue
            node = _root_node(hierarchy)
            if node is None:
                stats.skipped_unresolved += 1
                continue
            w, h = _screen_size(hierarchy)
            x, y = float(points[0][0]), float(points[0][1])
            bounds = _find_tapped(node, x, y, w, h)
            if bounds is None:
                stats.skipped_unresolved += 1
                continue
            ui1 = _read_screenshot(trace, cur_id)
            ui2 = _read_screenshot(trace, next_id)
            if ui1 is None or ui2 is None or ui1.shape != ui2.shape:
                stats.skipped_unresolved += 1
                continue
            samples.append(
                TransitionSample(
                    ui1_image=ui1,
                    ui2_image=ui2,
                    gt_bounds=bounds,
                    app_id=trace.name.rsplit("-", 1)[0] or trace.name,
                )
            )
            stats.samples += 1
    logger.info(
        "ingested %d samples from %d traces (%d swipes, %d unresolved, %d malformed skipped)",
        stats.samples,
        stats.traces,
        stats.skipped_swipes,
        stats.skipped_unresolved,
        stats.skipped_malformed,
    )
    return samples, stats
