"""Classify inter-shot transitions and assemble the scene transition graph.

The similarity dip between two shots carries the action's fingerprint:

* a tap swaps the whole screen at once, so the gap is a single drastic dip
  that recovers instantly;
* a scroll moves content continuously, so the gap dips and then climbs back
  gradually as the motion decelerates;
* a backward tap looks like a tap but lands on a previously seen screen, so
  it is resolved afterwards by checking new shots against the visit stack.

Scroll offsets are recovered separately by template-matching a central strip
of the destination UI against the source UI along each axis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .shots import ShotDetectorConfig, detect_shots
from .similarity import SsimParams, rgb_to_luma, similarity_series, ssim
from .types import (
    ActionScene,
    ActionType,
    FrameSeries,
    Shot,
    SimilaritySeries,
    ValidationError,
)

logger = logging.getLogger(__name__)


class RecoveryShape(Enum):
    INSTANT = "instant"
    GRADUAL = "gradual"


@dataclass(frozen=True)
class TransitionSignature:
    """Shape summary of the similarity gap between two consecutive shots."""

    drop_depth: float
    drop_width_s: float
    recovery_shape: RecoveryShape
    gap_values: tuple[float, ...]

    def __post_init__(self):
        if self.gap_values and not 0.0 <= self.drop_depth <= 1.0:
            raise ValidationError(f"drop_depth {self.drop_depth} outside [0, 1]")
        if self.drop_width_s < 0:
            raise ValidationError(f"drop_width_s {self.drop_width_s} must be >= 0")


@dataclass(frozen=True)
class SegmenterConfig:
    # Dips below tau_drop count as "drastic"; shallower dips still classify
    # but with reduced confidence. Calibrated on the synthetic corpus.
    tau_drop: float = 0.6
    # A gap counts as gradual (= scroll) when its 3-sample moving average
    # rises for at least this long.
    min_scroll_s: float = 0.3
    rise_eps: float = 1e-3
    # Keyframes this similar are treated as the same screen when resolving
    # backward transitions.
    tau_same: float = 0.95
    # Where the system back button lives, as a normalized screen location.
    nav_bar_location: tuple[float, float] = (0.5, 0.97)
    # Template strip for scroll matching: central fraction of the UI,
    # sized to dodge status and navigation bars.
    strip_width_frac: float = 0.6
    strip_height_frac: float = 0.3
    # Correlation peaks below this report the offset as unknown.
    min_match_score: float = 0.5


def _moving_average(values: Sequence[float], window: int = 3) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if len(arr) < window:
        return arr
    kernel = np.full(window, 1.0 / window)
    return np.convolve(arr, kernel, mode="valid")


def _longest_rise(smoothed: np.ndarray, eps: float) -> int:
    """Length in steps of the longest run of strictly rising values."""
    best = run = 0
    for i in range(1, len(smoothed)):
        if smoothed[i] > smoothed[i - 1] + eps:
            run += 1
            best = max(best, run)
        else:
            run = 0
    return best


def extract_signature(
    gap_values: Sequence[float], fps: float, config: SegmenterConfig = SegmenterConfig()
) -> TransitionSignature:
    gap_values = tuple(float(v) for v in gap_values)
    if not gap_values:
        return TransitionSignature(0.0, 0.0, RecoveryShape.INSTANT, ())
    rise_steps = _longest_rise(_moving_average(gap_values), config.rise_eps)
    shape = (
        RecoveryShape.GRADUAL
        if rise_steps / fps >= config.min_scroll_s
        else RecoveryShape.INSTANT
    )
    return TransitionSignature(
        drop_depth=min(gap_values),
        drop_width_s=len(gap_values) / fps,
        recovery_shape=shape,
        gap_values=gap_values,
    )


def classify_transition(
    sig: TransitionSignature, config: SegmenterConfig = SegmenterConfig()
) -> ActionType:
    """TAP or SCROLL from the gap shape; BACKWARD is resolved afterwards."""
    if sig.recovery_shape is RecoveryShape.GRADUAL:
        return ActionType.SCROLL
    return ActionType.TAP


def _transition_confidence(sig: TransitionSignature, config: SegmenterConfig) -> float:
    if not sig.gap_values:
        return 0.5  # degenerate gap: no evidence either way
    if sig.recovery_shape is RecoveryShape.GRADUAL:
        return 0.9
    return 0.95 if sig.drop_depth < config.tau_drop else 0.7


def resolve_backward(
    shots: Sequence[Shot],
    labels: Sequence[ActionType],
    frames: FrameSeries,
    tau_same: float = SegmenterConfig.tau_same,
    ssim_params: SsimParams = SsimParams(),
) -> list[ActionType]:
    """Relabel palindromic TAP transitions as BACKWARD via a visit stack.

    The stack holds the keyframe of every screen currently "open". A new
    shot whose keyframe matches the screen below the stack top means we
    returned to it, so the incoming transition is relabeled BACKWARD and the
    stack pops once. Scroll transitions replace the stack top instead (same
    screen, new scroll position) and are never relabeled. A recording that
    opens with a backward action is undetectable: the stack starts empty.
    """
    if len(labels) != len(shots) - 1:
        raise ValidationError(
            f"need one label per consecutive shot pair: {len(labels)} labels "
            f"for {len(shots)} shots"
        )
    labels = list(labels)
    lumas: dict[int, np.ndarray] = {}

    def luma_of(shot: Shot) -> np.ndarray:
        key = shot.keyframe
        if key not in lumas:
            lumas[key] = rgb_to_luma(frames.frames[key])
        return lumas[key]

    stack: list[Shot] = [shots[0]]
    for i in range(1, len(shots)):
        shot = shots[i]
        incoming = labels[i - 1]
        if incoming is ActionType.SCROLL:
            stack[-1] = shot
            continue
        if len(stack) >= 2 and ssim(luma_of(shot), luma_of(stack[-2]), ssim_params) >= tau_same:
            labels[i - 1] = ActionType.BACKWARD
            stack.pop()
        else:
            stack.append(shot)
    return labels


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-mean normalized cross-correlation of two equal-shape patches."""
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(float((a * a).sum()) * float((b * b).sum()))
    if denom == 0.0:
        return 0.0
    return float((a * b).sum() / denom)


def _axis_search(template: np.ndarray, band: np.ndarray, offset: int) -> tuple[float, int]:
    """Slide ``template`` along axis 0 of ``band``; returns (best score, shift).

    ``offset`` is the template's resting position inside the band, so the
    returned shift is relative to no motion.
    """
    th = template.shape[0]
    best_score, best_shift = -np.inf, 0
    for pos in range(band.shape[0] - th + 1):
        score = _ncc(template, band[pos : pos + th])
        if score > best_score:
            best_score, best_shift = score, pos - offset
    return best_score, best_shift


def scroll_offset(
    ui1: np.ndarray,
    ui2: np.ndarray,
    config: SegmenterConfig = SegmenterConfig(),
) -> Optional[tuple[int, int]]:
    """Pixel displacement (dx, dy) of the content from UI-1 to UI-2.

    Matches a central strip of UI-2's luminance against UI-1 along pure
    vertical and pure horizontal displacement; the better axis wins. Returns
    None when the best correlation peak is below the confidence floor.
    """
    if ui1.shape != ui2.shape:
        raise ValidationError(f"frames differ in shape: {ui1.shape} vs {ui2.shape}")
    luma1 = rgb_to_luma(ui1) if ui1.ndim == 3 else np.asarray(ui1, dtype=np.float64)
    luma2 = rgb_to_luma(ui2) if ui2.ndim == 3 else np.asarray(ui2, dtype=np.float64)
    h, w = luma1.shape
    th = max(1, round(h * config.strip_height_frac))
    tw = max(1, round(w * config.strip_width_frac))
    r0, c0 = (h - th) // 2, (w - tw) // 2
    template = luma2[r0 : r0 + th, c0 : c0 + tw]

    v_score, v_shift = _axis_search(template, luma1[:, c0 : c0 + tw], r0)
    h_score, h_shift = _axis_search(template.T, luma1[r0 : r0 + th, :].T, c0)

    if max(v_score, h_score) < config.min_match_score:
        return None
    if v_score >= h_score:
        return (0, -v_shift)
    return (-h_shift, 0)


@dataclass(frozen=True)
class SegmentationResult:
    shots: tuple[Shot, ...]
    scenes: tuple[ActionScene, ...]
    series: SimilaritySeries


def segment_video(
    video: FrameSeries,
    ssim_params: SsimParams = SsimParams(),
    shot_config: ShotDetectorConfig = ShotDetectorConfig(),
    config: SegmenterConfig = SegmenterConfig(),
) -> SegmentationResult:
    """Full segmentation pipeline: similarity -> shots -> typed scenes.

    Produces one scene per consecutive shot pair. TAP scenes carry no
    location (the tap model fills those downstream); SCROLL scenes carry a
    pixel offset when template matching is confident. Fewer than two shots
    yields an empty scene list, which is a valid outcome for a recording
    with no actions.
    """
    series = similarity_series(video, ssim_params)
    shots = detect_shots(series, shot_config)
    if len(shots) < 2:
        return SegmentationResult(tuple(shots), (), series)

    signatures = []
    for prev, nxt in zip(shots, shots[1:]):
        gap = series.values[prev.end_frame : nxt.start_frame]
        signatures.append(extract_signature(gap, series.fps, config))
    labels = [classify_transition(sig, config) for sig in signatures]
    confidences = [_transition_confidence(sig, config) for sig in signatures]
    labels = resolve_backward(shots, labels, video, config.tau_same, ssim_params)

    scenes = []
    for i, (prev, nxt) in enumerate(zip(shots, shots[1:])):
        offset = None
        if labels[i] is ActionType.SCROLL:
            offset = scroll_offset(
                video.frames[prev.keyframe].pixels,
                video.frames[nxt.keyframe].pixels,
                config,
            )
            if offset is None:
                logger.info("scene %d: scroll offset below confidence floor", i)
        scenes.append(
            ActionScene(
                from_shot=prev,
                to_shot=nxt,
                action=labels[i],
                scroll_offset=offset,
                confidence=confidences[i],
            )
        )
    return SegmentationResult(tuple(shots), tuple(scenes), series)
