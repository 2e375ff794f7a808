"""Cluster raw model coordinates and keep one representative per cluster.

The rough model output typically piles several coordinates onto the same
UI element. Density-based clustering with a minimum cluster size of one
merges everything within epsilon-reachability (so no point is noise), and
the most confident member represents each cluster. Representatives are
re-ranked by confidence, which is what the annotation UI shows as top-k.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .types import TapPrediction, ValidationError


@dataclass(frozen=True)
class ClusterConfig:
    eps: float = 40.0  # pixels at the model's input resolution
    min_pts: int = 1

    def __post_init__(self):
        if self.eps <= 0:
            raise ValidationError(f"eps must be > 0, got {self.eps}")
        if self.min_pts < 1:
            raise ValidationError(f"min_pts must be >= 1, got {self.min_pts}")


def cluster_labels(points: np.ndarray, cfg: ClusterConfig) -> np.ndarray:
    """Density-cluster 2-D points; returns one label per point.

    With ``min_pts`` of 1 every point is a core point, so clusters are the
    connected components of the epsilon-ball graph under Euclidean
    distance and no point is labeled noise. Labels are assigned in order
    of the lowest point index in each cluster, which makes the labeling a
    pure function of the point set.
    """
    n = len(points)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    reach = d2 <= cfg.eps * cfg.eps
    next_label = 0
    for i in range(n):
        if labels[i] != -1:
            continue
        stack = [i]
        labels[i] = next_label
        while stack:
            j = stack.pop()
            for k in np.nonzero(reach[j])[0]:
                if labels[k] == -1:
                    labels[k] = next_label
                    stack.append(int(k))
        next_label += 1
    return labels


def cluster_representatives(
    coords_px: Sequence[tuple[float, float]],
    confidences: Sequence[float],
    cfg: ClusterConfig = ClusterConfig(),
) -> list[tuple[float, float, float]]:
    """One (x, y, confidence) representative per cluster, ranked.

    Within a cluster the most confident point wins, ties broken by lowest
    (y, x); representatives are then ordered by confidence descending with
    the same tie-break. Together with the index-free clustering this makes
    the result independent of input order.
    """
    if len(coords_px) != len(confidences):
        raise ValidationError(
            f"{len(coords_px)} coordinates vs {len(confidences)} confidences"
        )
    if not coords_px:
        return []
    pts = np.asarray(coords_px, dtype=np.float64)
    conf = np.asarray(confidences, dtype=np.float64)
    labels = cluster_labels(pts, cfg)

    reps: list[tuple[float, float, float]] = []
    for lbl in range(labels.max() + 1):
        members = np.nonzero(labels == lbl)[0]
        best = min(members, key=lambda i: (-conf[i], pts[i, 1], pts[i, 0]))
        reps.append((float(pts[best, 0]), float(pts[best, 1]), float(conf[best])))

    reps.sort(key=lambda r: (-r[2], r[1], r[0]))
    return reps


def cluster_predictions(
    coords_px: Sequence[tuple[float, float]],
    confidences: Sequence[float],
    image_size_px: tuple[int, int],
    cfg: ClusterConfig = ClusterConfig(),
) -> list[TapPrediction]:
    """Ranked normalized predictions from raw pixel-space candidates.

    ``coords_px`` live at the resolution ``eps`` is expressed in;
    ``image_size_px`` is (width, height) for normalizing the output.
    """
    reps = cluster_representatives(coords_px, confidences, cfg)
    w, h = image_size_px
    out = []
    for rank, (x, y, c) in enumerate(reps, start=1):
        out.append(
            TapPrediction(
                x=min(1.0, max(0.0, x / w)),
                y=min(1.0, max(0.0, y / h)),
                confidence=min(1.0, max(0.0, c)),
                rank=rank,
            )
        )
    return out
