"""Pure pixel-level primitives.

Everything in this module is a deterministic function of its inputs: color
conversions, windowed structural similarity, differential motion masks, skin
masking, blob labeling, morphology, background subtraction, and crop/resize.
All images are 8-bit; fractional intermediates are computed in float64 and
rounded half-up when converted back to intensities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import (
    DimensionMismatch,
    InvalidChannelCount,
    InvalidRegion,
    SequenceTooShort,
    WindowTooLarge,
)

__all__ = [
    "Frame",
    "SsimParams",
    "BinaryMask",
    "Blob",
    "to_grayscale",
    "ssim",
    "issim",
    "differential_image",
    "rgb_to_ycbcr",
    "skin_mask",
    "connected_components",
    "morph",
    "background_foreground",
    "crop_resize",
]


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


@dataclass(frozen=True)
class Frame:
    """8-bit raster image, 1 (grayscale) or 3 (color) channels.

    ``pixels`` is (height, width) for grayscale or (height, width, 3) for
    color, dtype uint8. Frames are treated as immutable by every operation.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.dtype != np.uint8:
            raise TypeError("Frame.pixels must be a uint8 ndarray")
        if px.ndim == 3 and px.shape[2] != 3:
            raise InvalidChannelCount(f"expected 1 or 3 channels, got {px.shape[2]}")
        if px.ndim not in (2, 3):
            raise InvalidChannelCount(f"expected 2-D or 3-D pixel array, got {px.ndim}-D")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise DimensionMismatch("frame dimensions must be positive")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @classmethod
    def full(cls, height: int, width: int, value, channels: int = 1) -> "Frame":
        shape = (height, width) if channels == 1 else (height, width, 3)
        return cls(np.full(shape, value, dtype=np.uint8))


@dataclass(frozen=True)
class SsimParams:
    """Windowed-SSIM configuration.

    The stability constants are C1 = (k1*L)^2 and C2 = (k2*L)^2. Windows are
    uniform (unweighted) squares of side ``window`` placed at every offset
    that fits entirely inside the frame, stepping by ``stride``; the score is
    the arithmetic mean of per-window SSIM. Moments use population
    normalization (divide by window pixel count).
    """

    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0
    window: int = 7
    stride: int = 1

    def __post_init__(self):
        if not (0 < self.k1 < 1) or not (0 < self.k2 < 1):
            raise ValueError("k1 and k2 must be small positives below 1")
        if self.dynamic_range <= 0:
            raise ValueError("dynamic_range must be positive")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


@dataclass(frozen=True)
class BinaryMask:
    """One bit per pixel; dimensions always match the source frame."""

    bits: np.ndarray

    def __post_init__(self):
        if self.bits.dtype != np.bool_ or self.bits.ndim != 2:
            raise TypeError("BinaryMask.bits must be a 2-D bool ndarray")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class Blob:
    """Connected component of a binary mask.

    The bounding box is inclusive: (min_row, min_col, max_row, max_col) are
    coordinates of member pixels. ``top_row`` equals ``bbox[0]``.
    """

    area: int
    bbox: tuple[int, int, int, int]
    top_row: int
    centroid: tuple[float, float] = field(compare=False)


def _require_gray(frame: Frame, op: str) -> np.ndarray:
    if frame.channels != 1:
        raise InvalidChannelCount(f"{op} expects a 1-channel frame")
    return frame.pixels


def _require_color(frame: Frame, op: str) -> np.ndarray:
    if frame.channels != 3:
        raise InvalidChannelCount(f"{op} expects a 3-channel frame")
    return frame.pixels


def _require_same_shape(a: Frame, b: Frame):
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(
            f"frame shapes differ: {a.pixels.shape} vs {b.pixels.shape}"
        )


def to_grayscale(frame: Frame) -> Frame:
    """ITU-R BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B, rounded half-up."""
    px = _require_color(frame, "to_grayscale").astype(np.float64)
    y = px[:, :, 0] * 0.299 + px[:, :, 1] * 0.587 + px[:, :, 2] * 0.114
    return Frame(np.clip(_round_half_up(y), 0, 255).astype(np.uint8))


def _window_views(arr: np.ndarray, window: int, stride: int) -> np.ndarray:
    views = sliding_window_view(arr, (window, window))
    return views[::stride, ::stride]


def ssim(x: Frame, y: Frame, params: SsimParams | None = None) -> float:
    """Mean windowed structural similarity between two grayscale frames.

    Identical inputs score exactly 1.0 and the measure is symmetric in its
    arguments. Raises WindowTooLarge when the frame cannot hold one window.
    """
    params = params or SsimParams()
    xg = _require_gray(x, "ssim")
    yg = _require_gray(y, "ssim")
    _require_same_shape(x, y)
    if x.height < params.window or x.width < params.window:
        raise WindowTooLarge(
            f"window {params.window} exceeds frame {x.height}x{x.width}"
        )

    wx = _window_views(xg.astype(np.float64), params.window, params.stride)
    wy = _window_views(yg.astype(np.float64), params.window, params.stride)
    mx = wx.mean(axis=(-2, -1))
    my = wy.mean(axis=(-2, -1))
    dx = wx - mx[..., None, None]
    dy = wy - my[..., None, None]
    vx = (dx * dx).mean(axis=(-2, -1))
    vy = (dy * dy).mean(axis=(-2, -1))
    cov = (dx * dy).mean(axis=(-2, -1))

    c1, c2 = params.c1, params.c2
    scores = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / (
        (mx * mx + my * my + c1) * (vx + vy + c2)
    )
    return float(scores.mean())


def issim(frame: Frame, reference: Frame, params: SsimParams | None = None) -> float:
    """Inverted SSIM, 1 - ssim(frame, reference): 0 means no change."""
    return 1.0 - ssim(frame, reference, params)


def differential_image(
    prev: Frame, cur: Frame, next_: Frame, diff_threshold: int = 25
) -> BinaryMask:
    """Motion mask from two consecutive absolute differences.

    A pixel is set only where |cur - prev| and |next - cur| both exceed the
    threshold, i.e. motion is present in both transitions.
    """
    p = _require_gray(prev, "differential_image").astype(np.int16)
    c = _require_gray(cur, "differential_image").astype(np.int16)
    n = _require_gray(next_, "differential_image").astype(np.int16)
    _require_same_shape(prev, cur)
    _require_same_shape(cur, next_)
    first = np.abs(c - p) > diff_threshold
    second = np.abs(n - c) > diff_threshold
    return BinaryMask(first & second)


_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)


def rgb_to_ycbcr(frame: Frame) -> Frame:
    """Full-range (JPEG) YCbCr: chroma offset 128, rounded half-up, clamped."""
    px = _require_color(frame, "rgb_to_ycbcr").astype(np.float64)
    out = px @ _YCBCR.T
    out[:, :, 1] += 128.0
    out[:, :, 2] += 128.0
    return Frame(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))


def skin_mask(
    ycbcr: Frame,
    cb_range: tuple[int, int] = (80, 120),
    cr_range: tuple[int, int] = (133, 173),
) -> BinaryMask:
    """Chrominance-only skin mask; both ranges inclusive, luminance ignored."""
    px = _require_color(ycbcr, "skin_mask")
    cb = px[:, :, 1]
    cr = px[:, :, 2]
    bits = (
        (cb >= cb_range[0])
        & (cb <= cb_range[1])
        & (cr >= cr_range[0])
        & (cr <= cr_range[1])
    )
    return BinaryMask(bits)


_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def connected_components(mask: BinaryMask) -> list[Blob]:
    """8-connected blobs of a mask, ordered by label (scan order invariant).

    Every set pixel belongs to exactly one blob; blob areas sum to the mask's
    set-pixel count.
    """
    labels, n = ndimage.label(mask.bits, structure=_EIGHT_CONNECTED)
    if n == 0:
        return []
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=n + 1)
    rows = np.repeat(np.arange(mask.height), mask.width).astype(np.float64)
    cols = np.tile(np.arange(mask.width), mask.height).astype(np.float64)
    row_sums = np.bincount(flat, weights=rows, minlength=n + 1)
    col_sums = np.bincount(flat, weights=cols, minlength=n + 1)
    blobs = []
    for label, slc in enumerate(ndimage.find_objects(labels), start=1):
        area = int(areas[label])
        bbox = (slc[0].start, slc[1].start, slc[0].stop - 1, slc[1].stop - 1)
        centroid = (float(row_sums[label] / area), float(col_sums[label] / area))
        blobs.append(Blob(area=area, bbox=bbox, top_row=bbox[0], centroid=centroid))
    return blobs


def morph(mask: BinaryMask, op: str, radius: int = 1) -> BinaryMask:
    """Erosion or dilation with a square structuring element of side 2r+1.

    Out-of-bounds neighbors count as unset, so erosion removes pixels within
    ``radius`` of the border.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    if op == "erode":
        bits = ndimage.binary_erosion(mask.bits, structure=structure, border_value=0)
    elif op == "dilate":
        bits = ndimage.binary_dilation(mask.bits, structure=structure, border_value=0)
    else:
        raise ValueError(f"unknown morphological op: {op!r}")
    return BinaryMask(bits)


def background_foreground(
    sequence: list[Frame], bg_frames: int, fg_threshold: int
) -> list[BinaryMask]:
    """Median-background subtraction over a grayscale sequence.

    The background is the per-pixel median of the first ``bg_frames`` frames;
    each frame's foreground mask is set where |pixel - background| exceeds
    the threshold.
    """
    if bg_frames < 1:
        raise ValueError("bg_frames must be >= 1")
    if len(sequence) <= bg_frames:
        raise SequenceTooShort(
            f"need more than {bg_frames} frames, got {len(sequence)}"
        )
    grays = [_require_gray(f, "background_foreground") for f in sequence]
    stack = np.stack(grays[:bg_frames]).astype(np.float64)
    background = np.median(stack, axis=0)
    return [
        BinaryMask(np.abs(g.astype(np.float64) - background) > fg_threshold)
        for g in grays
    ]


def _expand_bbox(
    bbox: tuple[int, int, int, int],
    margin_frac: float,
    height: int,
    width: int,
) -> tuple[int, int, int, int]:
    r0, c0, r1, c1 = bbox
    dr = int(round((r1 - r0 + 1) * margin_frac))
    dc = int(round((c1 - c0 + 1) * margin_frac))
    return (
        max(0, r0 - dr),
        max(0, c0 - dc),
        min(height - 1, r1 + dr),
        min(width - 1, c1 + dc),
    )


def _bilinear_axis(length: int, out_length: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel-center sampling; clamped so out-of-range taps repeat the edge.
    src = (np.arange(out_length) + 0.5) * (length / out_length) - 0.5
    src = np.clip(src, 0.0, length - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, length - 1)
    frac = src - lo
    return lo, hi, frac


def crop_resize(
    frame: Frame,
    bbox: tuple[int, int, int, int],
    margin_frac: float = 0.0,
    out_w: int = 64,
    out_h: int = 48,
) -> Frame:
    """Crop an inclusive bbox (expanded by margin_frac per side, clamped to
    the frame) and bilinearly resample it to out_w x out_h."""
    gray = _require_gray(frame, "crop_resize")
    r0, c0, r1, c1 = bbox
    if r1 < r0 or c1 < c0:
        raise InvalidRegion(f"degenerate bbox {bbox}")
    if r0 < 0 or c0 < 0 or r1 >= frame.height or c1 >= frame.width:
        raise InvalidRegion(f"bbox {bbox} outside {frame.height}x{frame.width} frame")
    if margin_frac < 0:
        raise ValueError("margin_frac must be >= 0")

    r0, c0, r1, c1 = _expand_bbox(bbox, margin_frac, frame.height, frame.width)
    region = gray[r0 : r1 + 1, c0 : c1 + 1].astype(np.float64)
    rl, rh, rf = _bilinear_axis(region.shape[0], out_h)
    cl, ch, cf = _bilinear_axis(region.shape[1], out_w)

    top = region[rl][:, cl] * (1 - cf) + region[rl][:, ch] * cf
    bottom = region[rh][:, cl] * (1 - cf) + region[rh][:, ch] * cf
    out = top * (1 - rf[:, None]) + bottom * rf[:, None]
    return Frame(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))
