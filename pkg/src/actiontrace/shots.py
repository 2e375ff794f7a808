"""Shot detection: find steady intervals where the UI is fully rendered.

A shot is a maximal run of consecutive-frame similarities that all stay at
or above the steady threshold, provided the run spans at least the steady
duration in wall-clock time. Short steady stretches (a screen pausing
mid-load while images stream in) are rejected by the duration rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .types import Shot, SimilaritySeries, ValidationError


class KeyframePolicy(Enum):
    LAST = "last"
    MIDDLE = "middle"


@dataclass(frozen=True)
class ShotDetectorConfig:
    # Calibrated on synthetic recordings with loading animations; raise it to
    # split shots more aggressively on noisy captures.
    steady_threshold: float = 0.95
    steady_duration_s: float = 1.0
    keyframe_policy: KeyframePolicy = KeyframePolicy.LAST

    def __post_init__(self):
        if not 0.0 < self.steady_threshold < 1.0:
            raise ValidationError(
                f"steady_threshold must be in (0, 1), got {self.steady_threshold}"
            )
        if self.steady_duration_s <= 0:
            raise ValidationError(
                f"steady_duration_s must be > 0, got {self.steady_duration_s}"
            )


def _keyframe(start: int, end: int, policy: KeyframePolicy) -> int:
    if policy is KeyframePolicy.MIDDLE:
        return (start + end) // 2
    return end


def detect_shots(series: SimilaritySeries, config: ShotDetectorConfig = ShotDetectorConfig()) -> list[Shot]:
    """Return the ordered, disjoint shots of a similarity series.

    A run of pair indices [a, b] with every value >= the threshold covers
    frames a..b+1 and spans (b - a + 1) / fps seconds; runs that span at
    least the steady duration become shots (inclusive comparison, so a
    video cut off exactly at the duration still yields its final shot).
    May return an empty list.
    """
    if len(series) == 0:
        raise ValidationError("similarity series is empty")
    tau = config.steady_threshold
    min_pairs = config.steady_duration_s * series.fps
    shots: list[Shot] = []
    run_start = None
    values = series.values
    for i in range(len(values) + 1):
        steady = i < len(values) and values[i] >= tau
        if steady and run_start is None:
            run_start = i
        elif not steady and run_start is not None:
            n_pairs = i - run_start
            if n_pairs >= min_pairs:
                start, end = run_start, i  # frames run_start .. i (pair i-1 ends at frame i)
                shots.append(Shot(start, end, _keyframe(start, end, config.keyframe_policy)))
            run_start = None
    return shots
