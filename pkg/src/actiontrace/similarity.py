"""Luminance conversion and consecutive-frame perceptual similarity.

Frames are compared on the luminance (Y) plane of YUV space: most of the
perceptual change in a UI transition is a brightness-pattern change, so a
windowed structural similarity score over Y tracks UI motion well while
staying cheap. Scores are in [0, 1]; identical planes score exactly 1.0.

The windowed statistics use the canonical 11x11 Gaussian window with
sigma 1.5 and stabilizers C1=(0.01*255)^2, C2=(0.03*255)^2; the per-window
map is floored at 0 (negative structural terms carry no meaning here) and
reduced to one score by its arithmetic mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .types import Frame, FrameSeries, SimilaritySeries, ValidationError

# BT.601 luma weights.
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    gaussian_sigma: float = 1.5
    c1: float = (0.01 * 255.0) ** 2
    c2: float = (0.03 * 255.0) ** 2
    dynamic_range: float = 255.0
    # Frames wider than this are downscaled before comparison. Keep disabled
    # (None) wherever metric accuracy matters; it exists for throughput on
    # high-resolution recordings.
    downscale_width: int | None = None

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValidationError(f"window must be odd and >= 3, got {self.window}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValidationError("stabilization constants must be > 0")


def rgb_to_luma(frame: Frame | np.ndarray) -> np.ndarray:
    """BT.601 luminance plane: Y = 0.299 R + 0.587 G + 0.114 B, in [0, 255].

    Returns float64 without rounding; gray (128,128,128) maps to exactly 128.
    """
    pixels = frame.pixels if isinstance(frame, Frame) else frame
    y = pixels.astype(np.float64) @ _LUMA_WEIGHTS
    return np.clip(y, 0.0, 255.0)


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _window_filter(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Separable Gaussian filtering, then crop the half-window border so the
    # result equals a 'valid' convolution (border mode never leaks in).
    half = len(kernel) // 2
    out = cv2.sepFilter2D(plane, cv2.CV_64F, kernel, kernel, borderType=cv2.BORDER_REFLECT)
    return out[half:-half, half:-half]


def _check_planes(a: np.ndarray, b: np.ndarray, window: int) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"plane dimensions differ: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValidationError(f"expected 2-D luma planes, got {a.ndim}-D")
    if a.shape[0] < window or a.shape[1] < window:
        raise ValidationError(
            f"plane {a.shape} smaller than the {window}x{window} window"
        )


class _PlaneStats:
    """Windowed first/second moments of one plane, reusable across pairs."""

    __slots__ = ("plane", "mu", "mu_sq", "var")

    def __init__(self, plane: np.ndarray, kernel: np.ndarray):
        self.plane = plane
        self.mu = _window_filter(plane, kernel)
        self.mu_sq = self.mu * self.mu
        self.var = _window_filter(plane * plane, kernel)
        self.var -= self.mu_sq


def _ssim_from_stats(a: _PlaneStats, b: _PlaneStats, kernel: np.ndarray, params: SsimParams) -> float:
    # In-place arithmetic keeps the temporary count down; the operation
    # order is chosen so identical planes give exactly 1.0 and swapping
    # the arguments gives bit-identical results.
    c1, c2 = params.c1, params.c2
    mu_ab = a.mu * b.mu
    covar = _window_filter(a.plane * b.plane, kernel)
    covar -= mu_ab
    covar *= 2.0
    covar += c2  # covar is now the (2*cov + c2) factor
    mu_ab *= 2.0
    mu_ab += c1  # mu_ab is now the (2*mu_a*mu_b + c1) factor
    num = mu_ab
    num *= covar
    den = a.mu_sq + b.mu_sq
    den += c1
    var_sum = a.var + b.var
    var_sum += c2
    den *= var_sum
    num /= den
    np.clip(num, 0.0, 1.0, out=num)
    return float(np.mean(num))


def ssim(a: np.ndarray, b: np.ndarray, params: SsimParams = SsimParams()) -> float:
    """Mean windowed structural similarity of two luma planes, in [0, 1].

    Symmetric in its arguments and exactly 1.0 when ``a`` and ``b`` hold
    identical values. Raises on dimension mismatch or planes smaller than
    the window.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_planes(a, b, params.window)
    kernel = _gaussian_kernel(params.window, params.gaussian_sigma)
    return _ssim_from_stats(_PlaneStats(a, kernel), _PlaneStats(b, kernel), kernel, params)


def _maybe_downscale(plane: np.ndarray, params: SsimParams) -> np.ndarray:
    limit = params.downscale_width
    if limit is None or plane.shape[1] <= limit:
        return plane
    scale = limit / plane.shape[1]
    size = (limit, max(params.window, round(plane.shape[0] * scale)))
    return cv2.resize(plane, size, interpolation=cv2.INTER_AREA)


def similarity_series(video: FrameSeries, params: SsimParams = SsimParams()) -> SimilaritySeries:
    """Similarity of every consecutive frame pair; length is frame count - 1.

    Entry i compares frames i and i+1. Per-frame windowed statistics are
    computed once and shared between the two pairs a frame participates in,
    and repeated frame buffers (steady stretches of a clean recording) are
    recognized by identity; the values are bit-identical to calling
    :func:`ssim` on each pair.
    """
    if len(video) < 2:
        raise ValidationError("similarity series needs at least 2 frames")
    kernel = _gaussian_kernel(params.window, params.gaussian_sigma)
    values = []
    stats_cache: dict[int, _PlaneStats] = {}
    prev: _PlaneStats | None = None
    for frame in video.frames:
        stats = stats_cache.get(id(frame.pixels))
        if stats is None:
            plane = _maybe_downscale(rgb_to_luma(frame), params)
            _check_planes(plane, plane, params.window)
            stats = _PlaneStats(plane, kernel)
            # The FrameSeries keeps every buffer alive, so ids stay unique
            # for the duration of this walk.
            stats_cache[id(frame.pixels)] = stats
        if prev is not None:
            if prev is stats:
                # Same buffer, hence identical planes: the score is 1.0 by
                # the identity property, no need to compute it.
                values.append(1.0)
            else:
                values.append(_ssim_from_stats(prev, stats, kernel, params))
        prev = stats
    return SimilaritySeries(values=tuple(values), fps=video.fps)
