"""Pipeline configuration bundle with JSON overrides for the CLI."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .postprocess import ClusterConfig
from .segmenter import SegmenterConfig
from .shots import KeyframePolicy, ShotDetectorConfig
from .similarity import SsimParams
from .types import ValidationError


@dataclass(frozen=True)
class PipelineConfig:
    ssim: SsimParams = SsimParams()
    shots: ShotDetectorConfig = ShotDetectorConfig()
    segmenter: SegmenterConfig = SegmenterConfig()
    cluster: ClusterConfig = ClusterConfig()


def _apply_overrides(obj, overrides: dict):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    unknown = set(overrides) - set(fields)
    if unknown:
        raise ValidationError(f"unknown config keys for {type(obj).__name__}: {sorted(unknown)}")
    coerced = {}
    for key, value in overrides.items():
        current = getattr(obj, key)
        if isinstance(current, KeyframePolicy):
            value = KeyframePolicy(value)
        elif isinstance(current, tuple) and value is not None:
            value = tuple(value)
        coerced[key] = value
    return dataclasses.replace(obj, **coerced)


def load_pipeline_config(path: str | Path | None) -> PipelineConfig:
    """Defaults, optionally overridden by a JSON file.

    The file may contain any subset of the sections ``ssim``, ``shots``,
    ``segmenter`` and ``cluster``, each a mapping of field overrides;
    unknown keys fail loudly.
    """
    cfg = PipelineConfig()
    if path is None:
        return cfg
    doc = json.loads(Path(path).read_text())
    unknown = set(doc) - {"ssim", "shots", "segmenter", "cluster"}
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    return PipelineConfig(
        ssim=_apply_overrides(cfg.ssim, doc.get("ssim", {})),
        shots=_apply_overrides(cfg.shots, doc.get("shots", {})),
        segmenter=_apply_overrides(cfg.segmenter, doc.get("segmenter", {})),
        cluster=_apply_overrides(cfg.cluster, doc.get("cluster", {})),
    )
