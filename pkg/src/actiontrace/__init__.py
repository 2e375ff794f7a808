"""Action extraction from mobile-app screen recordings.

Segments a recording into typed action scenes (tap, scroll, backward),
predicts ranked tap locations with a small trainable detector, and serves
the results to a browser-based annotation workbench.
"""

__version__ = "0.1.0"

from .types import (
    ActionScene,
    ActionType,
    BoundingBox,
    Frame,
    FrameSeries,
    Shot,
    SimilaritySeries,
    TapPrediction,
    TransitionSample,
    UiElement,
    UiHierarchy,
    ValidationError,
)

__all__ = [
    "ActionScene",
    "ActionType",
    "BoundingBox",
    "Frame",
    "FrameSeries",
    "Shot",
    "SimilaritySeries",
    "TapPrediction",
    "TransitionSample",
    "UiElement",
    "UiHierarchy",
    "ValidationError",
    "__version__",
]
