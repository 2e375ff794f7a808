"""Trainable tap-location predictor.

Given a UI transition (UI-1 -> UI-2) the model proposes tappable regions
on UI-1, fuses each region's features with a global summary of UI-2, and
emits ranked tap coordinates with transit probabilities.
"""
from .loss import LossBreakdown, smooth_l1, tailored_loss, tailored_loss_batch
from .net import (
    AnchorConfig,
    EncoderConfig,
    EncoderPreset,
    Letterbox,
    ModelOutput,
    TapLocationNet,
    build_anchors,
    letterbox_image,
    predict_clustered,
    predict_locations,
    propose_regions,
)
from .train import (
    CheckpointError,
    TrainConfig,
    TrainingDiverged,
    evaluate_precision,
    load_checkpoint,
    save_checkpoint,
    split_by_app,
    train,
)

__all__ = [
    "AnchorConfig",
    "CheckpointError",
    "EncoderConfig",
    "EncoderPreset",
    "Letterbox",
    "LossBreakdown",
    "ModelOutput",
    "TapLocationNet",
    "TrainConfig",
    "TrainingDiverged",
    "build_anchors",
    "evaluate_precision",
    "letterbox_image",
    "load_checkpoint",
    "predict_clustered",
    "predict_locations",
    "propose_regions",
    "save_checkpoint",
    "smooth_l1",
    "split_by_app",
    "tailored_loss",
    "tailored_loss_batch",
    "train",
]
