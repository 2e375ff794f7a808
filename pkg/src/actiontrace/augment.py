"""UI-aware training-data augmentation over hierarchy-annotated samples.

Two transforms, both rooted in how interfaces are built:

* element exchange: elements inside one perceptual group (a tab bar, a
  list) look alike by design, so swapping two similar siblings yields a
  valid new screen. The ground-truth bounds follow the tapped element to
  its new position.
* reverse transitions: elements with opposite semantics (play/pause,
  on/off, checked/unchecked) undo themselves, so the transition played
  backwards is another valid sample at the same location.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .types import (
    BoundingBox,
    TransitionSample,
    UiElement,
    UiHierarchy,
    ValidationError,
)


@dataclass(frozen=True)
class ExchangeConfig:
    size_tolerance: float = 0.10  # max relative width/height difference
    emit_context_swaps: bool = True  # also emit swaps that leave the target in place


@dataclass(frozen=True)
class AugmentationReport:
    source_count: int
    exchange_count: int
    metamorphic_count: int

    def __post_init__(self):
        if min(self.source_count, self.exchange_count, self.metamorphic_count) < 0:
            raise ValidationError("augmentation counts must be >= 0")

    @property
    def ratio_added(self) -> float:
        if self.source_count == 0:
            return 0.0
        return (self.exchange_count + self.metamorphic_count) / self.source_count


def _similar(a: UiElement, b: UiElement, tol: float) -> bool:
    if a.class_name != b.class_name:
        return False
    aw, ah = a.bounds.x_upper - a.bounds.x_lower, a.bounds.y_upper - a.bounds.y_lower
    bw, bh = b.bounds.x_upper - b.bounds.x_lower, b.bounds.y_upper - b.bounds.y_lower
    return abs(aw - bw) <= tol * max(aw, bw) and abs(ah - bh) <= tol * max(ah, bh)


def _px_rect(bounds: BoundingBox, shape: tuple[int, ...]) -> tuple[int, int, int, int]:
    h, w = shape[:2]
    x0 = max(0, round(bounds.x_lower * w))
    y0 = max(0, round(bounds.y_lower * h))
    x1 = min(w, round(bounds.x_upper * w))
    y1 = min(h, round(bounds.y_upper * h))
    return x0, y0, x1, y1


def _swap_patches(image: np.ndarray, a: BoundingBox, b: BoundingBox) -> np.ndarray:
    """Swap two rectangular patches; pixels outside both rectangles stay put.

    Slightly unequal patches are swapped over their common top-left-anchored
    sub-rectangle, so no write ever escapes either source rectangle.
    """
    out = image.copy()
    ax0, ay0, ax1, ay1 = _px_rect(a, image.shape)
    bx0, by0, bx1, by1 = _px_rect(b, image.shape)
    ww = min(ax1 - ax0, bx1 - bx0)
    hh = min(ay1 - ay0, by1 - by0)
    if ww <= 0 or hh <= 0:
        return out
    patch_a = image[ay0 : ay0 + hh, ax0 : ax0 + ww].copy()
    patch_b = image[by0 : by0 + hh, bx0 : bx0 + ww].copy()
    out[ay0 : ay0 + hh, ax0 : ax0 + ww] = patch_b
    out[by0 : by0 + hh, bx0 : bx0 + ww] = patch_a
    return out


def _bounds_iou(a: BoundingBox, b: BoundingBox) -> float:
    ix0, iy0 = max(a.x_lower, b.x_lower), max(a.y_lower, b.y_lower)
    ix1, iy1 = min(a.x_upper, b.x_upper), min(a.y_upper, b.y_upper)
    inter = max(0.0, ix1 - ix0) * max(0.0, iy1 - iy0)
    if inter == 0.0:
        return 0.0
    area_a = (a.x_upper - a.x_lower) * (a.y_upper - a.y_lower)
    area_b = (b.x_upper - b.x_lower) * (b.y_upper - b.y_lower)
    return inter / (area_a + area_b - inter)


def find_tapped_element(hierarchy: UiHierarchy, gt_bounds: BoundingBox) -> Optional[UiElement]:
    """The leaf element best matching the ground-truth bounds, if any."""
    best, best_iou = None, 0.5  # require a substantial match

    def walk(node: UiElement):
        nonlocal best, best_iou
        iou = _bounds_iou(node.bounds, gt_bounds)
        if iou > best_iou:
            best, best_iou = node, iou
        for child in node.children:
            walk(child)

    walk(hierarchy.root)
    return best


def element_exchange(
    sample: TransitionSample, config: ExchangeConfig = ExchangeConfig()
) -> list[TransitionSample]:
    """All sibling-swap variants of a sample's UI-1 within its groups.

    For each group container, every pair of siblings matching in class and
    size (within tolerance) produces one new sample with the two patches
    swapped. When the tapped element is part of the pair the ground truth
    moves with it; otherwise the swap only diversifies context and the
    sample is tagged ``exchange-context``. Samples without a hierarchy
    yield an empty list.
    """
    if sample.hierarchy is None:
        return []
    tapped = find_tapped_element(sample.hierarchy, sample.gt_bounds)
    out: list[TransitionSample] = []
    for group in sample.hierarchy.iter_groups():
        kids = group.children
        for i in range(len(kids)):
            for j in range(i + 1, len(kids)):
                a, b = kids[i], kids[j]
                if not _similar(a, b, config.size_tolerance):
                    continue
                target_moved = tapped is not None and (a is tapped or b is tapped)
                if not target_moved and not config.emit_context_swaps:
                    continue
                new_gt = sample.gt_bounds
                if target_moved:
                    new_gt = b.bounds if a is tapped else a.bounds
                out.append(
                    TransitionSample(
                        ui1_image=_swap_patches(sample.ui1_image, a.bounds, b.bounds),
                        ui2_image=sample.ui2_image,
                        gt_bounds=new_gt,
                        app_id=sample.app_id,
                        hierarchy=None,  # the tree no longer matches the raster
                        origin="exchange" if target_moved else "exchange-context",
                    )
                )
    return out


# ---------------------------------------------------------------------------
# Reverse transitions


@dataclass(frozen=True)
class OppositePattern:
    class_patterns: tuple[str, ...] = ()
    text_patterns: tuple[str, ...] = ()

    def matches(self, element: UiElement) -> bool:
        for pat in self.class_patterns:
            if re.search(pat, element.class_name, re.IGNORECASE):
                return True
        if element.text:
            for pat in self.text_patterns:
                if re.search(pat, element.text, re.IGNORECASE):
                    return True
        return False


def load_lexicon(path: Optional[str] = None) -> list[OppositePattern]:
    """Opposite-semantics descriptors, from ``path`` or the packaged default."""
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    else:
        raw = json.loads(
            resources.files("actiontrace.data").joinpath("opposite_lexicon.json").read_text()
        )
    out = []
    for entry in raw:
        out.append(
            OppositePattern(
                class_patterns=tuple(entry.get("class_patterns", [])),
                text_patterns=tuple(entry.get("text_patterns", [])),
            )
        )
    return out


def metamorphic_augment(
    sample: TransitionSample, lexicon: Optional[Sequence[OppositePattern]] = None
) -> Optional[TransitionSample]:
    """The reversed transition (UI-2 -> UI-1) for opposite-semantics taps.

    Applicable when the tapped element's class or text matches the
    opposite-semantics lexicon (toggles, play/pause and the like); the
    reversal keeps the same ground-truth bounds. Returns None when not
    applicable. Applying the reversal twice returns the original
    transition.
    """
    if sample.hierarchy is None:
        return None
    tapped = find_tapped_element(sample.hierarchy, sample.gt_bounds)
    if tapped is None:
        return None
    if lexicon is None:
        lexicon = load_lexicon()
    if not any(p.matches(tapped) for p in lexicon):
        return None
    return TransitionSample(
        ui1_image=sample.ui2_image,
        ui2_image=sample.ui1_image,
        gt_bounds=sample.gt_bounds,
        app_id=sample.app_id,
        hierarchy=sample.hierarchy,
        origin="metamorphic",
    )


def augment_dataset(
    samples: Sequence[TransitionSample],
    budget_fraction: float = 0.26,
    exchange_config: ExchangeConfig = ExchangeConfig(),
    lexicon: Optional[Sequence[OppositePattern]] = None,
    seed: int = 0,
) -> tuple[list[TransitionSample], AugmentationReport]:
    """Generate augmented samples capped at a fraction of the source set.

    Candidates are drawn round-robin (one exchange and one reversal slot
    per source pass) and truncated by a seeded shuffle once the budget is
    exceeded, keeping the augmented distribution close to the source one.
    """
    if budget_fraction < 0:
        raise ValidationError(f"budget_fraction must be >= 0, got {budget_fraction}")
    if lexicon is None:
        lexicon = load_lexicon()
    exchanges: list[TransitionSample] = []
    reversals: list[TransitionSample] = []
    for s in samples:
        exchanges.extend(element_exchange(s, exchange_config))
        rev = metamorphic_augment(s, lexicon)
        if rev is not None:
            reversals.append(rev)
    budget = int(budget_fraction * len(samples))
    candidates = reversals + exchanges  # reversals first: rarer and cheaper
    if len(candidates) > budget:
        rng = np.random.default_rng(seed)
        keep = rng.permutation(len(candidates))[:budget]
        candidates = [candidates[i] for i in sorted(keep)]
    report = AugmentationReport(
        source_count=len(samples),
        exchange_count=sum(1 for c in candidates if c.origin.startswith("exchange")),
        metamorphic_count=sum(1 for c in candidates if c.origin == "metamorphic"),
    )
    return candidates, report
