"""The training loss: 2-class cross-entropy plus a bounded regression term.

The regression term treats the ground-truth element bounds as a free zone:
a predicted coordinate inside the bound (per dimension) costs nothing,
while a coordinate outside is pulled toward the bound midpoint with a
smooth-L1 penalty. Because element boundaries are loose and content sits
near the center, regressing to the midpoint is the stable target. Note the
per-dimension indicator makes the loss step discontinuously at the bound
edge (from 0 to the smooth-L1 of the half-width); that step is by design.

Regression applies only to positive-labeled predictions, i.e. proposals
the trainer assigned to the tapped element.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..types import BoundingBox, ValidationError


@dataclass(frozen=True)
class LossBreakdown:
    loss_cls: float
    loss_reg_x: float
    loss_reg_y: float

    def __post_init__(self):
        for name in ("loss_cls", "loss_reg_x", "loss_reg_y"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValidationError(f"{name}={v} must be finite and >= 0")

    @property
    def total(self) -> float:
        return self.loss_cls + self.loss_reg_x + self.loss_reg_y


def smooth_l1(d: torch.Tensor, beta: float = 1.0) -> torch.Tensor:
    """Quadratic inside |d| < beta, linear outside; continuous at the joint."""
    ad = d.abs()
    return torch.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)


def _reg_term(coord: torch.Tensor, lower: torch.Tensor, upper: torch.Tensor) -> torch.Tensor:
    """smooth_l1(distance to midpoint) gated by the out-of-bound indicator."""
    outside = (coord < lower) | (coord > upper)
    mid = (lower + upper) / 2.0
    return torch.where(outside, smooth_l1(coord - mid), torch.zeros_like(coord))


def tailored_loss_batch(
    coords: torch.Tensor,  # (N, 2) predicted normalized coordinates
    logits: torch.Tensor,  # (N, 2) class logits
    gt_bounds: torch.Tensor,  # (N, 4) as (x_lower, y_lower, x_upper, y_upper)
    labels: torch.Tensor,  # (N,) int64, 1 = assigned to the tapped element
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-prediction loss terms: (cls (N,), reg_x (N,), reg_y (N,))."""
    if not (torch.isfinite(coords).all() and torch.isfinite(logits).all()):
        raise ValidationError("non-finite values in predictions")
    cls = F.cross_entropy(logits, labels, reduction="none")
    pos = labels == 1
    reg_x = torch.where(
        pos,
        _reg_term(coords[:, 0], gt_bounds[:, 0], gt_bounds[:, 2]),
        torch.zeros_like(coords[:, 0]),
    )
    reg_y = torch.where(
        pos,
        _reg_term(coords[:, 1], gt_bounds[:, 1], gt_bounds[:, 3]),
        torch.zeros_like(coords[:, 1]),
    )
    return cls, reg_x, reg_y


def tailored_loss(
    pred_xy: tuple[float, float],
    class_logits: tuple[float, float],
    gt: BoundingBox,
    label: int,
) -> LossBreakdown:
    """Loss for a single prediction against one ground-truth bound."""
    if label not in (0, 1):
        raise ValidationError(f"label must be 0 or 1, got {label}")
    coords = torch.tensor([pred_xy], dtype=torch.float64)
    logits = torch.tensor([class_logits], dtype=torch.float64)
    bounds = torch.tensor([[gt.x_lower, gt.y_lower, gt.x_upper, gt.y_upper]], dtype=torch.float64)
    labels = torch.tensor([label], dtype=torch.int64)
    cls, reg_x, reg_y = tailored_loss_batch(coords, logits, bounds, labels)
    return LossBreakdown(float(cls[0]), float(reg_x[0]), float(reg_y[0]))
