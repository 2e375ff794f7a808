"""HTTP service feeding the annotation workbench.

Read endpoints expose the computed artifacts (scenes with keyframe
thumbnails, per-scene top-k locations, frames/video for playback); the
only mutable state is the annotation store, a flat JSON file per
recording. The service never rewrites pipeline artifacts.
"""
from __future__ import annotations

import base64
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import __version__
from .types import ActionType, parse_trace
from .videoio import load_video

logger = logging.getLogger(__name__)

ANNOTATION_SCHEMA_VERSION = 1
MARKER_STYLES = ("BOUNDING_BOX", "ARROW", "TAP_ICON", "SCROLL_ICON")
THUMBNAIL_WIDTH = 160
MAX_TOP_K = 5


@dataclass
class AnnotationStore:
    """File-backed annotation documents, one JSON per recording.

    Writes are serialized per video id; an upsert replaces any previous
    annotation for the same scene (last write wins, stamped server-side).
    """

    root: Path

    def __post_init__(self):
        self.root = Path(self.root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, video_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in video_id)
        return self.root / f"{safe}.json"

    def load(self, video_id: str) -> dict:
        p = self._path(video_id)
        if not p.exists():
            return {
                "schema_version": ANNOTATION_SCHEMA_VERSION,
                "video_id": video_id,
                "annotations": [],
            }
        return json.loads(p.read_text())

    def upsert(self, video_id: str, entry: dict) -> dict:
        with self._lock:
            doc = self.load(video_id)
            doc["annotations"] = [
                a for a in doc["annotations"] if a["scene_index"] != entry["scene_index"]
            ]
            doc["annotations"].append(entry)
            doc["annotations"].sort(key=lambda a: a["scene_index"])
            self._path(video_id).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
            return doc


def _thumbnail_b64(pixels) -> str:
    h, w = pixels.shape[:2]
    scale = THUMBNAIL_WIDTH / w
    thumb = cv2.resize(pixels, (THUMBNAIL_WIDTH, max(1, round(h * scale))), interpolation=cv2.INTER_AREA)
    ok, buf = cv2.imencode(".png", thumb[:, :, ::-1])
    if not ok:
        raise RuntimeError("thumbnail encoding failed")
    return base64.b64encode(buf.tobytes()).decode("ascii")


def _error(status: int, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail=message)


def build_app(
    trace_path: str | Path,
    video_path: str | Path,
    annotations_dir: str | Path = "annotations",
    static_dir: Optional[str | Path] = None,
) -> FastAPI:
    """Assemble the service around one trace + recording pair."""
    trace_doc = json.loads(Path(trace_path).read_text())
    scenes, fps, source_id = parse_trace(trace_doc)
    video = load_video(video_path)
    video_id = source_id or Path(video_path).stem
    store = AnnotationStore(Path(annotations_dir))
    video_file = Path(video_path) if Path(video_path).is_file() else None

    app = FastAPI(title="actiontrace annotation service", version=__version__)

    scene_payload = []
    for i, sc in enumerate(scenes):
        scene_payload.append(
            {
                "index": i,
                "action": sc.action.value,
                "confidence": sc.confidence,
                "from_shot": {
                    "start_s": sc.from_shot.start_frame / fps,
                    "end_s": (sc.from_shot.end_frame + 1) / fps,
                    "keyframe": sc.from_shot.keyframe,
                },
                "to_shot": {
                    "start_s": sc.to_shot.start_frame / fps,
                    "end_s": (sc.to_shot.end_frame + 1) / fps,
                    "keyframe": sc.to_shot.keyframe,
                },
                "transition_start_s": (sc.from_shot.end_frame + 1) / fps,
                "scroll_offset": list(sc.scroll_offset) if sc.scroll_offset else None,
                "thumbnail_png_base64": _thumbnail_b64(video.frames[sc.from_shot.keyframe].pixels),
            }
        )

    @app.get("/api/meta")
    def meta():
        return {
            "schema_version": 1,
            "video_id": video_id,
            "fps": fps,
            "frame_count": len(video),
            "width": video.width,
            "height": video.height,
            "duration_s": len(video) / fps,
            "scene_count": len(scenes),
            "has_container": video_file is not None,
        }

    @app.get("/api/scenes")
    def get_scenes():
        return {"schema_version": 1, "video_id": video_id, "scenes": scene_payload}

    @app.get("/api/locations")
    def get_locations(scene: int, k: int = MAX_TOP_K):
        if not 0 <= scene < len(scenes):
            raise _error(404, f"scene {scene} does not exist (have {len(scenes)})")
        k = max(1, min(MAX_TOP_K, k))
        sc = scenes[scene]
        preds = [
            {"x": p.x, "y": p.y, "confidence": p.confidence, "rank": p.rank}
            for p in sc.predictions[:k]
        ]
        return {
            "schema_version": 1,
            "scene": scene,
            "action": sc.action.value,
            "k": k,
            "locations": preds,
        }

    @app.get("/api/frame")
    def get_frame(index: int):
        if not 0 <= index < len(video):
            raise _error(404, f"frame {index} does not exist (have {len(video)})")
        ok, buf = cv2.imencode(".png", video.frames[index].pixels[:, :, ::-1])
        if not ok:
            raise _error(500, "frame encoding failed")
        return Response(content=buf.tobytes(), media_type="image/png")

    @app.get("/api/video")
    def get_video(request: Request):
        if video_file is None:
            raise _error(
                404,
                "recording is a frame directory; use /api/frame for playback",
            )
        range_header = request.headers.get("range")
        size = video_file.stat().st_size
        if range_header:
            try:
                unit, _, spec = range_header.partition("=")
                start_s, _, end_s = spec.partition("-")
                start = int(start_s)
                end = min(int(end_s) if end_s else size - 1, size - 1)
                assert unit.strip() == "bytes" and 0 <= start <= end
            except (ValueError, AssertionError):
                raise _error(416, f"malformed range header {range_header!r}")
            with open(video_file, "rb") as f:
                f.seek(start)
                chunk = f.read(end - start + 1)
            return Response(
                content=chunk,
                status_code=206,
                media_type="video/mp4",
                headers={
                    "Content-Range": f"bytes {start}-{end}/{size}",
                    "Accept-Ranges": "bytes",
                },
            )
        return FileResponse(video_file, media_type="video/mp4")

    @app.post("/api/annotations")
    def post_annotation(payload: dict):
        scene_index = payload.get("scene_index")
        if not isinstance(scene_index, int) or not 0 <= scene_index < len(scenes):
            raise _error(404, f"scene {scene_index!r} does not exist")
        action = payload.get("action")
        if action not in {a.value for a in ActionType}:
            raise _error(422, f"unknown action {action!r}")
        marker = payload.get("marker_style")
        if marker not in MARKER_STYLES:
            raise _error(422, f"marker_style must be one of {MARKER_STYLES}")
        entry = {
            "scene_index": scene_index,
            "action": action,
            "marker_style": marker,
            "location": payload.get("location"),
            "offset": payload.get("offset"),
            "author": payload.get("author", "anonymous"),
            "timestamp": payload.get("timestamp") or time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        loc = entry["location"]
        if loc is not None:
            if (
                not isinstance(loc, (list, tuple))
                or len(loc) != 2
                or not all(isinstance(v, (int, float)) and 0.0 <= v <= 1.0 for v in loc)
            ):
                raise _error(422, f"location must be normalized [x, y], got {loc!r}")
            entry["location"] = [float(loc[0]), float(loc[1])]
        doc = store.upsert(video_id, entry)
        return JSONResponse(doc)

    @app.get("/api/export")
    def export():
        return JSONResponse(store.load(video_id))

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
