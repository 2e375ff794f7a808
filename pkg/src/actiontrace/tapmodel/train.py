"""Training: app-level splits, proposal assignment, the optimization loop.

Assignment policy (the sampling side of the loss): proposals whose box
overlaps the tapped element (IoU over a floor, or center inside it, or
the single best-IoU box) are positives; they take the classification
label 1 and the bounded regression pull. The negative pool for
classification is the proposals whose regressed coordinate landed outside
the ground-truth bound, hardest (most confident) first, capped at 3:1
against the positives so the easy background does not drown the signal.
Unassigned proposals whose coordinate happens to fall inside the bound
are left out of the classification loss entirely.

Training is deterministic under a fixed seed, and independent of the
input ordering of the dataset: samples are canonically sorted by content
digest before the seeded shuffle.
"""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from ..postprocess import ClusterConfig
from ..types import BoundingBox, TransitionSample, ValidationError
from .loss import tailored_loss_batch
from .net import (
    AnchorConfig,
    EncoderConfig,
    EncoderPreset,
    TapLocationNet,
    predict_clustered,
    preprocess_pair,
)

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    lr: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    weight_decay: float = 1e-4
    assign_iou: float = 0.3
    neg_ratio: int = 3
    # Learning rate decays by this factor after 75% of the epochs.
    lr_decay: float = 0.3
    # Keep the weights from the best validation epoch instead of the last.
    restore_best: bool = True
    split_fractions: tuple[float, float, float] = (0.85, 0.08, 0.07)
    encoder: EncoderConfig = EncoderConfig()
    anchors: AnchorConfig = AnchorConfig()
    cluster: ClusterConfig = ClusterConfig()

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {self.split_fractions}")


def split_by_app(
    samples: Sequence[TransitionSample],
    fractions: tuple[float, float, float] = (0.85, 0.08, 0.07),
) -> tuple[list[TransitionSample], list[TransitionSample], list[TransitionSample]]:
    """Partition into train/val/test with no app spanning two splits.

    Apps are walked in sorted id order and assigned greedily by cumulative
    sample count, so the realized proportions track the requested ones as
    closely as app granularity allows.
    """
    by_app: dict[str, list[TransitionSample]] = {}
    for s in samples:
        by_app.setdefault(s.app_id, []).append(s)
    total = len(samples)
    if len(by_app) < 3:
        raise ValidationError(f"need at least 3 distinct app ids, got {len(by_app)}")
    cut_train = fractions[0] * total
    cut_val = (fractions[0] + fractions[1]) * total
    groups = [by_app[app] for app in sorted(by_app)]
    # Midpoint assignment over ordered apps yields two boundaries; clamp
    # them so every split keeps at least one whole app even when the app
    # granularity is coarse relative to the fractions.
    b1 = b2 = len(groups)
    cum = 0
    for i, group in enumerate(groups):
        mid = cum + len(group) / 2
        if mid >= cut_train and b1 == len(groups):
            b1 = i
        if mid >= cut_val and b2 == len(groups):
            b2 = i
        cum += len(group)
    b2 = min(max(b2, b1 + 1), len(groups) - 1)
    b1 = min(max(b1, 1), b2 - 1)
    splits: tuple[list, list, list] = ([], [], [])
    for i, group in enumerate(groups):
        splits[0 if i < b1 else 1 if i < b2 else 2].extend(group)
    return splits


def sample_digest(s: TransitionSample) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(s.ui1_image.tobytes())
    h.update(s.ui2_image.tobytes())
    h.update(
        f"{s.gt_bounds.x_lower},{s.gt_bounds.y_lower},{s.gt_bounds.x_upper},{s.gt_bounds.y_upper}".encode()
    )
    h.update(s.app_id.encode())
    return h.hexdigest()


def _canonical(samples: Sequence[TransitionSample]) -> list[TransitionSample]:
    return sorted(samples, key=sample_digest)


def _gt_input_bounds(gt: BoundingBox, lbox) -> np.ndarray:
    x0, y0 = lbox.to_input_px(gt.x_lower, gt.y_lower)
    x1, y1 = lbox.to_input_px(gt.x_upper, gt.y_upper)
    return np.array([x0, y0, x1, y1], dtype=np.float64)


def _box_iou_center(boxes: np.ndarray, gt_box_px: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ix0 = np.maximum(boxes[:, 0], gt_box_px[0])
    iy0 = np.maximum(boxes[:, 1], gt_box_px[1])
    ix1 = np.minimum(boxes[:, 2], gt_box_px[2])
    iy1 = np.minimum(boxes[:, 3], gt_box_px[3])
    inter = np.clip(ix1 - ix0, 0, None) * np.clip(iy1 - iy0, 0, None)
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    gt_area = (gt_box_px[2] - gt_box_px[0]) * (gt_box_px[3] - gt_box_px[1])
    union = areas + gt_area - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    cx = (boxes[:, 0] + boxes[:, 2]) / 2
    cy = (boxes[:, 1] + boxes[:, 3]) / 2
    center_in = (
        (cx >= gt_box_px[0]) & (cx <= gt_box_px[2]) & (cy >= gt_box_px[1]) & (cy <= gt_box_px[3])
    )
    return iou, center_in


def _assign_proposals(
    boxes: np.ndarray, gt_box_px: np.ndarray, assign_iou: float
) -> np.ndarray:
    """Boolean positive mask: IoU floor, center containment, or best IoU."""
    iou, center_in = _box_iou_center(boxes, gt_box_px)
    pos = (iou >= assign_iou) | center_in
    pos[int(np.argmax(iou))] = True
    return pos


def _assign_strict(boxes: np.ndarray, gt_box_px: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(positives, ignore band) for classification supervision.

    Positives must represent the element well (tight IoU, or centered with
    fair overlap); boxes that graze the element are ignored rather than
    labeled, so the classifier trains on unambiguous examples only.
    """
    iou, center_in = _box_iou_center(boxes, gt_box_px)
    pos = (iou >= 0.5) | (center_in & (iou >= 0.25))
    pos[int(np.argmax(iou))] = True
    ignore = (~pos) & (iou >= 0.1)
    return pos, ignore


def _leaf_bounds(sample: TransitionSample) -> list[BoundingBox]:
    if sample.hierarchy is None:
        return []
    leaves: list[BoundingBox] = []

    def walk(node):
        if not node.children:
            leaves.append(node.bounds)
        for child in node.children:
            walk(child)

    walk(sample.hierarchy.root)
    return leaves


def _tappability_targets(
    anchors: np.ndarray, sample: TransitionSample, lbox, assign_iou: float
) -> np.ndarray:
    """Anchor positives for objectness: anchors on ANY element.

    Tappability is a property of every interactive element, not only the
    one that happens to be tapped in this sample. Supervising objectness
    with the tapped element alone teaches the region scorer to memorize
    per-layout answers and starves held-out screens of proposals. Falls
    back to the tapped element when no hierarchy is attached.
    """
    element_bounds = _leaf_bounds(sample)
    if not element_bounds:
        element_bounds = [sample.gt_bounds]
    pos = np.zeros(len(anchors), dtype=bool)
    for b in element_bounds:
        pos |= _assign_proposals(anchors, _gt_input_bounds(b, lbox), assign_iou)
    return pos


def _balanced_bce(
    logits: torch.Tensor, pos_mask: np.ndarray, neg_ratio: int
) -> torch.Tensor:
    """Objectness BCE with hardest negatives capped against the positives."""
    pos_t = torch.from_numpy(pos_mask)
    n_pos = int(pos_t.sum())
    neg_idx = torch.nonzero(~pos_t).flatten()
    with torch.no_grad():
        neg_scores = logits[neg_idx]
    keep = neg_ratio * max(n_pos, 1)
    if len(neg_idx) > keep:
        neg_idx = neg_idx[torch.argsort(-neg_scores, stable=True)[:keep]]
    idx = torch.cat([torch.nonzero(pos_t).flatten(), neg_idx])
    targets = torch.zeros(len(logits))[idx]
    targets[: n_pos] = 1.0
    return torch.nn.functional.binary_cross_entropy_with_logits(logits[idx], targets)


def _sample_loss(
    model: TapLocationNet, sample: TransitionSample, cfg: TrainConfig
) -> torch.Tensor:
    from .net import propose_regions

    t1, t2, lbox = preprocess_pair(sample.ui1_image, sample.ui2_image, cfg.encoder)
    feat1 = model.encode(t1)
    feat2 = model.encode(t2)
    rpn_log = model.rpn_logits(feat1)
    scores = torch.sigmoid(rpn_log).detach().numpy().astype(np.float64)
    boxes, _ = propose_regions(scores, model.anchors(), cfg.anchors)
    coords, logits = model.head(feat1, feat2, boxes, t1, t2)

    gt_px = _gt_input_bounds(sample.gt_bounds, lbox)
    anchor_pos = _tappability_targets(model.anchors(), sample, lbox, cfg.assign_iou)
    loss_rpn = _balanced_bce(rpn_log, anchor_pos, cfg.neg_ratio)

    pos_mask, ignore_mask = _assign_strict(boxes, gt_px)
    hi, wi = cfg.encoder.input_size
    # Work in input-normalized coordinates: both coords and bounds divided
    # by the input extent, so the loss scale is resolution-free.
    gx0, gy0 = gt_px[0] / wi, gt_px[1] / hi
    gx1, gy1 = gt_px[2] / wi, gt_px[3] / hi

    with torch.no_grad():
        probs = torch.softmax(logits, dim=1)[:, 1]
        cx = coords[:, 0]
        cy = coords[:, 1]
        inside = (cx >= gx0) & (cx <= gx1) & (cy >= gy0) & (cy <= gy1)
    pos_t = torch.from_numpy(pos_mask)
    ignore_t = torch.from_numpy(ignore_mask)
    # Negative pool: unassigned proposals whose regressed coordinate fell
    # outside the ground-truth bound, hardest first, capped against the
    # positive count.
    neg_pool = (~pos_t) & (~ignore_t) & (~inside)
    neg_idx = torch.nonzero(neg_pool).flatten()
    n_pos = int(pos_t.sum())
    n_neg_keep = cfg.neg_ratio * max(n_pos, 1)
    if len(neg_idx) > n_neg_keep:
        hard = torch.argsort(-probs[neg_idx], stable=True)[:n_neg_keep]
        neg_idx = neg_idx[hard]

    selected = torch.cat([torch.nonzero(pos_t).flatten(), neg_idx])
    labels = torch.zeros(len(coords), dtype=torch.int64)
    labels[pos_t] = 1
    bounds = torch.tensor([[gx0, gy0, gx1, gy1]], dtype=coords.dtype).expand(len(coords), 4)

    cls, reg_x, reg_y = tailored_loss_batch(coords, logits, bounds, labels)
    loss = cls[selected].mean() + loss_rpn
    if n_pos:
        loss = loss + (reg_x[pos_t].sum() + reg_y[pos_t].sum()) / n_pos
    # Listwise ranking term: the softmax mass over all proposals should
    # concentrate on the ones covering the tapped element (multi-positive,
    # so same-element proposals never compete with each other). The
    # per-prediction 2-class objective alone calibrates but
    # under-separates the winner at this data scale.
    pos_logit = logits[:, 1] - logits[:, 0]
    log_probs = torch.log_softmax(pos_logit, dim=0)
    loss = loss - torch.logsumexp(log_probs[pos_t], dim=0)
    return loss


def evaluate_precision(
    model: TapLocationNet,
    samples: Sequence[TransitionSample],
    ks: Sequence[int] = (1, 3, 5),
    cluster_cfg: ClusterConfig = ClusterConfig(),
) -> dict[int, float]:
    """Precision@k over clustered predictions, per-sample hit-at-k."""
    hits = {k: 0 for k in ks}
    for s in samples:
        preds = predict_clustered(model, s.ui1_image, s.ui2_image, cluster_cfg)
        for k in ks:
            if any(s.gt_bounds.contains(p.x, p.y) for p in preds[:k]):
                hits[k] += 1
    return {k: hits[k] / len(samples) for k in ks}


@dataclass
class TrainResult:
    model: TapLocationNet
    history: list[dict] = field(default_factory=list)
    splits: tuple[int, int, int] = (0, 0, 0)
    test_samples: list[TransitionSample] = field(default_factory=list)
    best_epoch: int = -1


def train(
    dataset: Sequence[TransitionSample],
    cfg: TrainConfig = TrainConfig(),
    augment_fn: Optional[Callable[[list[TransitionSample]], list[TransitionSample]]] = None,
) -> TrainResult:
    """Train from scratch on an app-split dataset; returns model + history.

    ``augment_fn``, when given, maps the training split to extra samples
    (validation and test stay untouched). Raises
    :class:`TrainingDiverged` on a non-finite loss.
    """
    if not dataset:
        raise ValidationError("training dataset is empty")
    train_s, val_s, test_s = split_by_app(dataset, cfg.split_fractions)
    train_s = _canonical(train_s)
    val_s = _canonical(val_s)
    test_s = _canonical(test_s)
    if augment_fn is not None:
        extra = augment_fn(train_s)
        logger.info("augmentation added %d samples", len(extra))
        train_s = _canonical(list(train_s) + list(extra))

    torch.manual_seed(cfg.seed)
    model = TapLocationNet(cfg.encoder, cfg.anchors)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    scheduler = torch.optim.lr_scheduler.MultiStepLR(
        opt, milestones=[max(1, int(cfg.epochs * 0.75))], gamma=cfg.lr_decay
    )
    rng = np.random.default_rng(cfg.seed)

    history: list[dict] = []
    best: tuple | None = None  # (P@1, P@5, epoch, state_dict)
    t0 = time.monotonic()
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(train_s))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            opt.zero_grad()
            loss = torch.zeros((), dtype=torch.float32)
            for i in batch:
                loss = loss + _sample_loss(model, train_s[int(i)], cfg)
            loss = loss / len(batch)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach()) * len(batch)
        scheduler.step()
        epoch_loss /= len(train_s)
        val_prec = evaluate_precision(model, val_s, cluster_cfg=cfg.cluster)
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss,
                "val_precision": {str(k): v for k, v in val_prec.items()},
            }
        )
        if best is None or (val_prec[1], val_prec[5], epoch) >= best[:3]:
            best = (
                val_prec[1],
                val_prec[5],
                epoch,
                {k: v.detach().clone() for k, v in model.state_dict().items()},
            )
        logger.info(
            "epoch %d: loss=%.4f val P@1=%.3f P@5=%.3f (%.0fs)",
            epoch,
            epoch_loss,
            val_prec[1],
            val_prec[5],
            time.monotonic() - t0,
        )
    best_epoch = cfg.epochs - 1
    if cfg.restore_best and best is not None:
        model.load_state_dict(best[3])
        best_epoch = best[2]
        logger.info("restored best validation epoch %d", best_epoch)
    return TrainResult(
        model=model,
        history=history,
        splits=(len(train_s), len(val_s), len(test_s)),
        test_samples=test_s,
        best_epoch=best_epoch,
    )


# ---------------------------------------------------------------------------
# Checkpoints


def _arch_dict(enc: EncoderConfig, anchors: AnchorConfig) -> dict:
    d = asdict(enc)
    d["preset"] = enc.preset.value
    d["input_size"] = list(enc.input_size)
    a = asdict(anchors)
    a["scales"] = list(anchors.scales)
    a["ratios"] = list(anchors.ratios)
    return {"encoder": d, "anchors": a}


def save_checkpoint(model: TapLocationNet, path: str, history: Optional[list] = None) -> None:
    payload = {
        "schema_version": CHECKPOINT_VERSION,
        "arch": _arch_dict(model.enc_cfg, model.anchor_cfg),
        "state_dict": model.state_dict(),
        "history": history or [],
    }
    torch.save(payload, path)


def load_checkpoint(path: str) -> TapLocationNet:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:  # corrupt or not a checkpoint
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    version = payload.get("schema_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint schema_version {version!r} does not match "
            f"supported version {CHECKPOINT_VERSION}"
        )
    arch = payload["arch"]
    enc = EncoderConfig(
        input_size=tuple(arch["encoder"]["input_size"]),
        preset=EncoderPreset(arch["encoder"]["preset"]),
        frozen_stages=arch["encoder"]["frozen_stages"],
    )
    anchors = AnchorConfig(
        scales=tuple(arch["anchors"]["scales"]),
        ratios=tuple(arch["anchors"]["ratios"]),
        proposals_kept=arch["anchors"]["proposals_kept"],
        nms_iou=arch["anchors"]["nms_iou"],
    )
    model = TapLocationNet(enc, anchors)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as e:
        raise CheckpointError(f"architecture/state mismatch in {path}: {e}") from e
    model.eval()
    return model
