"""Evaluation metrics for segmentation quality and location prediction.

* ``video_f1`` scores shot segmentations by duration-weighted overlap.
* ``levenshtein_score`` scores action-type sequences by normalized edit
  distance, expressed as a percentage (100 means an exact match).
* ``precision_at_k`` scores ranked tap predictions: a sample counts as a
  hit when any of its top-k coordinates lands inside the ground-truth
  element (edges inclusive).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .types import BoundingBox, Shot, TapPrediction, ValidationError

Interval = tuple[float, float]


@dataclass(frozen=True)
class EvalReport:
    video_f1: float
    levenshtein_pct: float
    precision_at: dict[int, float]

    def __post_init__(self):
        if not 0.0 <= self.video_f1 <= 1.0:
            raise ValidationError(f"video_f1 {self.video_f1} outside [0, 1]")
        if not 0.0 <= self.levenshtein_pct <= 100.0:
            raise ValidationError(f"levenshtein_pct {self.levenshtein_pct} outside [0, 100]")
        ks = sorted(self.precision_at)
        for lo, hi in zip(ks, ks[1:]):
            if self.precision_at[lo] > self.precision_at[hi]:
                raise ValidationError(
                    f"precision_at must be non-decreasing in k: "
                    f"P@{lo}={self.precision_at[lo]} > P@{hi}={self.precision_at[hi]}"
                )

    def to_dict(self) -> dict:
        return {
            "video_f1": self.video_f1,
            "levenshtein_pct": self.levenshtein_pct,
            "precision_at": {str(k): v for k, v in sorted(self.precision_at.items())},
        }


def shot_intervals(shots: Sequence[Shot], fps: float) -> list[Interval]:
    """Half-open second intervals of shots: a frame occupies one frame period."""
    return [(s.start_frame / fps, (s.end_frame + 1) / fps) for s in shots]


def _total_duration(intervals: Sequence[Interval]) -> float:
    total = 0.0
    for start, end in intervals:
        if end < start:
            raise ValidationError(f"interval ({start}, {end}) ends before it starts")
        total += end - start
    return total


def _overlap(ours: Sequence[Interval], gt: Sequence[Interval]) -> float:
    total = 0.0
    for a0, a1 in ours:
        for b0, b1 in gt:
            total += max(0.0, min(a1, b1) - max(a0, b0))
    return total


def video_f1(ours: Sequence[Interval], gt: Sequence[Interval]) -> float:
    """Duration-weighted overlap F1 of two shot segmentations, in seconds.

    Both lists must be internally disjoint and on the same timebase (use
    :func:`shot_intervals` to convert frame-indexed shots). Two empty
    segmentations agree perfectly (1.0); exactly one empty scores 0.0.
    """
    ours, gt = list(ours), list(gt)
    if not ours and not gt:
        return 1.0
    if not ours or not gt:
        return 0.0
    return 2.0 * _overlap(ours, gt) / (_total_duration(ours) + _total_duration(gt))


def levenshtein_distance(a: Sequence, b: Sequence) -> int:
    """Classic edit distance (insert / delete / substitute, unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[len(b)]


def levenshtein_score(ours: Sequence, gt: Sequence) -> float:
    """100 * (1 - editDistance / max length), floored at 0; both empty -> 100."""
    if not ours and not gt:
        return 100.0
    dist = levenshtein_distance(ours, gt)
    return max(0.0, 100.0 * (1.0 - dist / max(len(ours), len(gt))))


def precision_at_k(
    predictions: Sequence[Sequence[TapPrediction]],
    gt_elements: Sequence[BoundingBox],
    k: int,
) -> float:
    """Fraction of samples whose top-k predictions hit the ground truth.

    A hit means any of the first k ranked coordinates falls inside the
    sample's element bounds, edges inclusive.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if len(predictions) != len(gt_elements):
        raise ValidationError(
            f"{len(predictions)} prediction lists vs {len(gt_elements)} ground truths"
        )
    if not predictions:
        raise ValidationError("precision_at_k needs at least one sample")
    hits = 0
    for preds, box in zip(predictions, gt_elements):
        if not preds:
            raise ValidationError("every sample needs at least one prediction")
        if any(box.contains(p.x, p.y) for p in preds[:k]):
            hits += 1
    return hits / len(predictions)


def evaluate(
    our_shots: Sequence[Interval],
    gt_shots: Sequence[Interval],
    our_actions: Sequence,
    gt_actions: Sequence,
    predictions: Sequence[Sequence[TapPrediction]] = (),
    gt_elements: Sequence[BoundingBox] = (),
    ks: Sequence[int] = (1, 3, 5),
) -> EvalReport:
    precision = {}
    if predictions:
        precision = {k: precision_at_k(predictions, gt_elements, k) for k in ks}
    return EvalReport(
        video_f1=video_f1(our_shots, gt_shots),
        levenshtein_pct=levenshtein_score(our_actions, gt_actions),
        precision_at=precision,
    )
