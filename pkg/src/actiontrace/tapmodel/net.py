"""Network architecture: visual encoder, region proposals, location head.

The encoder is a residual convolutional stack with total stride 16. Two
presets exist: DESK_SMALL (a compact stack trained from scratch, suitable
for CPU-scale corpora) and PAPER_RESNET101 (a torchvision ResNet-101
trunk for users bringing external weights). Anchors of five scales and
four aspect ratios are tiled over every feature cell, scored for
perceived tappability, and reduced by greedy overlap suppression; each
kept region is pooled, fused with a global UI-2 descriptor, and decoded
into a coordinate (regressed relative to the region center, in normalized
units) plus a 2-class transit probability.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import cv2
import numpy as np
import torch
import torch.nn as nn
from torchvision.ops import roi_align

from ..postprocess import ClusterConfig, cluster_representatives
from ..types import TapPrediction, ValidationError

STRIDE = 16


class EncoderPreset(Enum):
    DESK_SMALL = "desk_small"
    PAPER_RESNET101 = "paper_resnet101"


@dataclass(frozen=True)
class EncoderConfig:
    input_size: tuple[int, int] = (256, 160)  # (H, W) after letterbox
    preset: EncoderPreset = EncoderPreset.DESK_SMALL
    frozen_stages: int = 0

    def __post_init__(self):
        h, w = self.input_size
        if h % STRIDE or w % STRIDE:
            raise ValidationError(
                f"input_size {self.input_size} must be divisible by the stride {STRIDE}"
            )


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple[int, ...] = (32, 64, 128, 256, 512)
    ratios: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)  # width : height
    proposals_kept: int = 64
    nms_iou: float = 0.7

    def __post_init__(self):
        if list(self.scales) != sorted(self.scales) or min(self.scales) <= 0:
            raise ValidationError(f"scales must be positive ascending, got {self.scales}")
        if min(self.ratios) <= 0:
            raise ValidationError(f"ratios must be positive, got {self.ratios}")
        if self.proposals_kept < 1:
            raise ValidationError(f"proposals_kept must be >= 1, got {self.proposals_kept}")

    @property
    def anchors_per_cell(self) -> int:
        return len(self.scales) * len(self.ratios)


# ---------------------------------------------------------------------------
# Letterboxing


@dataclass(frozen=True)
class Letterbox:
    """Geometry of a resize-with-padding step, for mapping coordinates back."""

    scale: float
    pad_x: int
    pad_y: int
    orig_size: tuple[int, int]  # (H, W)
    input_size: tuple[int, int]

    def to_input_px(self, x_norm: float, y_norm: float) -> tuple[float, float]:
        h, w = self.orig_size
        return (x_norm * w * self.scale + self.pad_x, y_norm * h * self.scale + self.pad_y)

    def to_norm(self, x_px: float, y_px: float) -> tuple[float, float]:
        h, w = self.orig_size
        x = (x_px - self.pad_x) / self.scale / w
        y = (y_px - self.pad_y) / self.scale / h
        return (min(1.0, max(0.0, x)), min(1.0, max(0.0, y)))


def letterbox_image(
    image: np.ndarray, input_size: tuple[int, int], fill: int = 114
) -> tuple[np.ndarray, Letterbox]:
    """Resize keeping aspect ratio and pad to ``input_size`` (H, W)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"expected HxWx3 image, got {image.shape}")
    h, w = image.shape[:2]
    hi, wi = input_size
    scale = min(hi / h, wi / w)
    nh, nw = round(h * scale), round(w * scale)
    resized = cv2.resize(image, (nw, nh), interpolation=cv2.INTER_LINEAR)
    out = np.full((hi, wi, 3), fill, dtype=np.uint8)
    pad_y, pad_x = (hi - nh) // 2, (wi - nw) // 2
    out[pad_y : pad_y + nh, pad_x : pad_x + nw] = resized
    return out, Letterbox(scale, pad_x, pad_y, (h, w), input_size)


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    arr = image.astype(np.float32) / 255.0 - 0.5
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


# ---------------------------------------------------------------------------
# Encoders


class _ResidualBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.norm1 = nn.GroupNorm(8, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.norm2 = nn.GroupNorm(8, cout)
        self.act = nn.GELU()
        self.skip = (
            nn.Conv2d(cin, cout, 1, stride, bias=False)
            if stride != 1 or cin != cout
            else nn.Identity()
        )

    def forward(self, x):
        y = self.act(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return self.act(y + self.skip(x))


class DeskEncoder(nn.Module):
    """Six residual blocks over a strided stem; total stride 16, 64 channels.

    GroupNorm and GELU keep the forward pass batch-independent and smooth,
    which matters for tiny-batch CPU training and for finite-difference
    gradient checks.
    """

    out_channels = 64

    def __init__(self):
        super().__init__()
        # No normalization in the stem: flat fills dominate UI rasters and
        # their absolute level is a real feature; normalizing here would
        # erase it before the residual skips can carry it forward.
        self.stem = nn.Sequential(nn.Conv2d(3, 16, 3, 2, 1), nn.GELU())
        self.stages = nn.ModuleList(
            [
                nn.Sequential(_ResidualBlock(16, 24, 2), _ResidualBlock(24, 24)),
                nn.Sequential(_ResidualBlock(24, 48, 2), _ResidualBlock(48, 48)),
                nn.Sequential(_ResidualBlock(48, 64, 2), _ResidualBlock(64, 64)),
            ]
        )

    def forward(self, x):
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
        return x


class ResnetEncoder(nn.Module):
    """ResNet-101 trunk through layer3 (stride 16); weights left random.

    Intended for users loading externally trained weights; the trunk is far
    too large to train on a desk-scale corpus.
    """

    out_channels = 1024

    def __init__(self):
        super().__init__()
        from torchvision.models import resnet101

        net = resnet101(weights=None)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.stages = nn.ModuleList([net.layer1, net.layer2, net.layer3])

    def forward(self, x):
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
        return x


def _build_encoder(cfg: EncoderConfig) -> nn.Module:
    enc = DeskEncoder() if cfg.preset is EncoderPreset.DESK_SMALL else ResnetEncoder()
    # Freezing counts the stem as stage 0, matching the usual fine-tuning
    # recipe of keeping early low-level filters fixed.
    if cfg.frozen_stages > 0:
        for p in enc.stem.parameters():
            p.requires_grad = False
        for stage in list(enc.stages)[: cfg.frozen_stages - 1]:
            for p in stage.parameters():
                p.requires_grad = False
    return enc


# ---------------------------------------------------------------------------
# Anchors and proposals


def build_anchors(feat_h: int, feat_w: int, cfg: AnchorConfig, image_size: tuple[int, int]) -> np.ndarray:
    """All anchor boxes for a feature map, clipped to the image, as (N, 4).

    Boxes are (x0, y0, x1, y1) in input pixels, laid out cell-major (row,
    column) with scale-major/ratio-minor anchors inside each cell, so index
    order is deterministic.
    """
    hi, wi = image_size
    boxes = np.empty((feat_h, feat_w, cfg.anchors_per_cell, 4), dtype=np.float64)
    cy = (np.arange(feat_h) + 0.5) * STRIDE
    cx = (np.arange(feat_w) + 0.5) * STRIDE
    a = 0
    for scale in cfg.scales:
        for ratio in cfg.ratios:
            w = scale * np.sqrt(ratio)
            h = scale / np.sqrt(ratio)
            boxes[:, :, a, 0] = cx[None, :] - w / 2
            boxes[:, :, a, 1] = cy[:, None] - h / 2
            boxes[:, :, a, 2] = cx[None, :] + w / 2
            boxes[:, :, a, 3] = cy[:, None] + h / 2
            a += 1
    boxes = boxes.reshape(-1, 4)
    np.clip(boxes[:, 0::2], 0, wi, out=boxes[:, 0::2])
    np.clip(boxes[:, 1::2], 0, hi, out=boxes[:, 1::2])
    return boxes


def _iou_one_vs_many(box: np.ndarray, others: np.ndarray) -> np.ndarray:
    ix0 = np.maximum(box[0], others[:, 0])
    iy0 = np.maximum(box[1], others[:, 1])
    ix1 = np.minimum(box[2], others[:, 2])
    iy1 = np.minimum(box[3], others[:, 3])
    inter = np.clip(ix1 - ix0, 0, None) * np.clip(iy1 - iy0, 0, None)
    area = (box[2] - box[0]) * (box[3] - box[1])
    areas = (others[:, 2] - others[:, 0]) * (others[:, 3] - others[:, 1])
    union = area + areas - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return iou


_PRE_NMS_TOPK = 600


def propose_regions(
    scores: np.ndarray, anchors: np.ndarray, cfg: AnchorConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy-suppressed top-K proposals from scored anchors.

    ``scores`` and ``anchors`` are index-aligned. Sorting is stable on
    (-score, index): with degenerate uniform scores the selection falls
    back to plain index order. Returns (boxes (K, 4), scores (K,)); fewer
    than K boxes can only happen on degenerate tiny feature maps.
    """
    if len(scores) != len(anchors):
        raise ValidationError(f"{len(scores)} scores vs {len(anchors)} anchors")
    order = np.argsort(-scores, kind="stable")[:_PRE_NMS_TOPK]
    boxes = anchors[order]
    kept: list[int] = []
    suppressed = np.zeros(len(order), dtype=bool)
    for i in range(len(order)):
        if suppressed[i]:
            continue
        kept.append(i)
        if len(kept) == cfg.proposals_kept:
            break
        iou = _iou_one_vs_many(boxes[i], boxes[i + 1 :])
        suppressed[i + 1 :] |= iou >= cfg.nms_iou
    idx = order[kept]
    return anchors[idx], scores[idx]


# ---------------------------------------------------------------------------
# Full model


@dataclass(frozen=True)
class ModelOutput:
    """Ranked raw predictions for one UI transition (before clustering)."""

    coords_norm: np.ndarray  # (K, 2) normalized to the original UI-1 image
    coords_input_px: np.ndarray  # (K, 2) pixels in letterboxed input space
    probs: np.ndarray  # (K,) positive-class softmax scores, non-increasing
    roi_boxes: np.ndarray  # (K, 4) provenance: proposal box per coordinate
    letterbox: Letterbox

    def __post_init__(self):
        k = len(self.coords_norm)
        if not (len(self.probs) == len(self.coords_input_px) == len(self.roi_boxes) == k):
            raise ValidationError("model output arrays disagree in length")


class TapLocationNet(nn.Module):
    """Encoder + proposal scoring + coordinate/classification head."""

    def __init__(self, enc_cfg: EncoderConfig = EncoderConfig(), anchor_cfg: AnchorConfig = AnchorConfig()):
        super().__init__()
        self.enc_cfg = enc_cfg
        self.anchor_cfg = anchor_cfg
        self.encoder = _build_encoder(enc_cfg)
        c = self.encoder.out_channels
        self.rpn_conv = nn.Conv2d(c, c, 3, 1, 1)
        self.rpn_score = nn.Conv2d(c, anchor_cfg.anchors_per_cell, 1)
        self.act = nn.GELU()
        self.pool_size = 4
        self.touch_radius_px = 12.0
        # Regression reads the joint deep vector (pooled RoI features plus
        # the global UI-2 descriptor); classification deliberately sees
        # only compact appearance statistics (mean colors of the scored
        # point, the proposal interior and UI-2 overall). Giving the
        # classifier the high-dimensional deep vector lets a desk-scale
        # run memorize training pairs instead of learning the UI-1/UI-2
        # correspondence, which collapses held-out precision; with a
        # large-corpus encoder the deep vector can be re-added here.
        self.fc_reg = nn.Linear(c * self.pool_size * self.pool_size + c, 128)
        self.reg_head = nn.Linear(128, 2)
        self.fc_cls = nn.Linear(30, 64)
        self.cls_head = nn.Linear(64, 2)
        # Zero-init regression so raw coordinates start at proposal centers.
        nn.init.zeros_(self.reg_head.weight)
        nn.init.zeros_(self.reg_head.bias)
        self._anchor_cache: Optional[np.ndarray] = None

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        return self.encoder(image)

    def anchors(self) -> np.ndarray:
        if self._anchor_cache is None:
            hi, wi = self.enc_cfg.input_size
            self._anchor_cache = build_anchors(hi // STRIDE, wi // STRIDE, self.anchor_cfg, (hi, wi))
        return self._anchor_cache

    def rpn_logits(self, feat: torch.Tensor) -> torch.Tensor:
        """Flattened objectness logits, index-aligned with :meth:`anchors`."""
        x = self.act(self.rpn_conv(feat))
        x = self.rpn_score(x)  # (1, A, Hf, Wf)
        return x.permute(0, 2, 3, 1).reshape(-1)

    def head(
        self,
        feat1: torch.Tensor,
        feat2: torch.Tensor,
        boxes_px: np.ndarray,
        img1: torch.Tensor,
        img2: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Coordinates (normalized input space) and class logits per RoI."""
        boxes = torch.as_tensor(boxes_px, dtype=feat1.dtype)
        rois = torch.cat([torch.zeros(len(boxes), 1, dtype=feat1.dtype), boxes], dim=1)
        pooled = roi_align(
            feat1, rois, output_size=self.pool_size, spatial_scale=1.0 / STRIDE, aligned=True
        )
        global2 = feat2.mean(dim=(2, 3)).expand(len(boxes), -1)  # (K, C)

        joint = torch.cat([pooled.flatten(1), global2], dim=1)
        offsets = self.reg_head(self.act(self.fc_reg(joint)))
        hi, wi = self.enc_cfg.input_size
        centers = torch.stack(
            [(boxes[:, 0] + boxes[:, 2]) / (2 * wi), (boxes[:, 1] + boxes[:, 3]) / (2 * hi)],
            dim=1,
        )
        coords = centers + offsets

        # Appearance is sampled twice: a touch-sized patch around the
        # regressed coordinate (so a sloppy proposal box cannot dilute the
        # point being scored) and the proposal's shrunken interior (robust
        # to border and text pixels).
        r = self.touch_radius_px
        with torch.no_grad():
            cx = (coords[:, 0] * wi).clamp(r, wi - r)
            cy = (coords[:, 1] * hi).clamp(r, hi - r)
            patches = torch.stack([cx - r, cy - r, cx + r, cy + r], dim=1)
            bw = (boxes[:, 2] - boxes[:, 0]) * 0.3
            bh = (boxes[:, 3] - boxes[:, 1]) * 0.3
            inner = torch.stack(
                [boxes[:, 0] + bw, boxes[:, 1] + bh, boxes[:, 2] - bw, boxes[:, 3] - bh],
                dim=1,
            )
        zeros = torch.zeros(len(boxes), 1, dtype=feat1.dtype)
        pt_rgb = roi_align(
            img1, torch.cat([zeros, patches], dim=1), output_size=1, spatial_scale=1.0, aligned=True
        ).flatten(1)
        in_rgb = roi_align(
            img1, torch.cat([zeros, inner], dim=1), output_size=1, spatial_scale=1.0, aligned=True
        ).flatten(1)
        ctx_rgb = img2.mean(dim=(2, 3)).expand(len(boxes), -1)
        src_rgb = img1.mean(dim=(2, 3)).expand(len(boxes), -1)
        match = torch.cat(
            [
                pt_rgb,
                in_rgb,
                ctx_rgb,
                src_rgb,
                pt_rgb * ctx_rgb,
                in_rgb * ctx_rgb,
                (pt_rgb - ctx_rgb).abs(),
                (in_rgb - ctx_rgb).abs(),
                (pt_rgb - in_rgb).abs(),
                # near-zero when the transition only toggles state in place
                (src_rgb - ctx_rgb).abs(),
            ],
            dim=1,
        )
        hidden = self.act(self.fc_cls(match))
        logits = self.cls_head(hidden)
        return coords, logits

    def forward(
        self, ui1: torch.Tensor, ui2: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, np.ndarray, np.ndarray]:
        """Full pass: returns (coords, logits, proposal boxes, proposal scores)."""
        feat1 = self.encode(ui1)
        feat2 = self.encode(ui2)
        logits_rpn = self.rpn_logits(feat1)
        scores = torch.sigmoid(logits_rpn).detach().numpy().astype(np.float64)
        boxes, box_scores = propose_regions(scores, self.anchors(), self.anchor_cfg)
        coords, logits = self.head(feat1, feat2, boxes, ui1, ui2)
        return coords, logits, boxes, box_scores


def preprocess_pair(
    ui1: np.ndarray, ui2: np.ndarray, enc_cfg: EncoderConfig
) -> tuple[torch.Tensor, torch.Tensor, Letterbox]:
    if ui1.shape != ui2.shape:
        raise ValidationError(f"UI images differ in shape: {ui1.shape} vs {ui2.shape}")
    img1, box = letterbox_image(ui1, enc_cfg.input_size)
    img2, _ = letterbox_image(ui2, enc_cfg.input_size)
    return image_to_tensor(img1), image_to_tensor(img2), box


def predict_locations(model: TapLocationNet, ui1: np.ndarray, ui2: np.ndarray) -> ModelOutput:
    """Raw ranked coordinates for a transition, most confident first."""
    model.eval()
    t1, t2, lbox = preprocess_pair(ui1, ui2, model.enc_cfg)
    with torch.no_grad():
        coords, logits, boxes, _ = model(t1, t2)
        probs = torch.softmax(logits, dim=1)[:, 1].numpy().astype(np.float64)
    coords = coords.numpy().astype(np.float64)
    hi, wi = model.enc_cfg.input_size
    coords_px = coords * np.array([wi, hi], dtype=np.float64)
    order = np.argsort(-probs, kind="stable")
    coords_px = coords_px[order]
    probs = probs[order]
    boxes = boxes[order]
    coords_norm = np.array([lbox.to_norm(x, y) for x, y in coords_px], dtype=np.float64)
    return ModelOutput(
        coords_norm=coords_norm,
        coords_input_px=coords_px,
        probs=probs,
        roi_boxes=boxes,
        letterbox=lbox,
    )


def predict_clustered(
    model: TapLocationNet,
    ui1: np.ndarray,
    ui2: np.ndarray,
    cluster_cfg: ClusterConfig = ClusterConfig(),
    top_k: Optional[int] = None,
) -> list[TapPrediction]:
    """Canonical inference path: raw predictions, clustered and re-ranked.

    Clustering runs in input-pixel space (where the epsilon radius is
    defined); representatives are mapped back to coordinates normalized to
    the original image.
    """
    out = predict_locations(model, ui1, ui2)
    reps = cluster_representatives(
        [(float(x), float(y)) for x, y in out.coords_input_px],
        [float(p) for p in out.probs],
        cluster_cfg,
    )
    if top_k is not None:
        reps = reps[:top_k]
    preds = []
    for rank, (x_px, y_px, conf) in enumerate(reps, start=1):
        x, y = out.letterbox.to_norm(x_px, y_px)
        preds.append(TapPrediction(x=x, y=y, confidence=min(1.0, max(0.0, conf)), rank=rank))
    return preds
