"""Peak detection and hand-snapshot extraction.

The snapshot is a 64x48 grayscale crop of the gesturing hand taken at the
sequence midpoint: the face region is blanked, skin pixels are masked in
YCbCr, blobs are labeled, the highest surviving blob is chosen, and its
(margin-expanded) bounding box is cropped from the grayscale peak frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GestureSequence
from .errors import NoHandDetected, SequenceTooShort
from .imaging import (
    BinaryMask,
    Blob,
    Frame,
    background_foreground,
    connected_components,
    crop_resize,
    morph,
    skin_mask,
    rgb_to_ycbcr,
    to_grayscale,
)
from .motion_profile import GateDecision

__all__ = [
    "Snapshot",
    "ExtractionConfig",
    "detect_peak",
    "select_hand_blob",
    "extract_snapshot",
    "SNAPSHOT_WIDTH",
    "SNAPSHOT_HEIGHT",
]

SNAPSHOT_WIDTH = 64
SNAPSHOT_HEIGHT = 48


@dataclass(frozen=True)
class Snapshot:
    image: Frame
    source_index: int
    blob: Blob
    snapshot_enabled: bool = True


@dataclass(frozen=True)
class ExtractionConfig:
    cb_range: tuple[int, int] = (80, 120)
    cr_range: tuple[int, int] = (133, 173)
    # Face region: per-sequence annotation when available, else a fixed band
    # (top fraction of rows, centered fraction of columns) is blanked.
    face_source: str = "annotation"  # "annotation" | "heuristic"
    face_band_rows: float = 0.30
    face_band_cols: float = 0.50
    background_removal: bool = False
    bg_frames: int = 3
    fg_threshold: int = 25
    morphology: bool = False
    morph_radius: int = 1
    crop_margin: float = 0.2
    foreground_overlap: float = 0.5

    def __post_init__(self):
        for lo, hi in (self.cb_range, self.cr_range):
            if not (0 <= lo <= hi <= 255):
                raise ValueError("chroma ranges must lie within [0, 255]")
        if self.crop_margin < 0:
            raise ValueError("crop_margin must be >= 0")
        if self.face_source not in ("annotation", "heuristic"):
            raise ValueError(f"unknown face_source {self.face_source!r}")


def detect_peak(sequence: GestureSequence) -> int:
    """Peak frame index: the sequence midpoint, floor(n/2)."""
    n = len(sequence)
    if n < 1:
        raise SequenceTooShort("empty sequence has no peak")
    return n // 2


def _overlap_fraction(blob: Blob, labels_in_blob: np.ndarray, fg: np.ndarray) -> float:
    return float(fg[labels_in_blob].sum()) / blob.area


def select_hand_blob(
    blobs: list[Blob],
    foreground: BinaryMask | None = None,
    *,
    blob_masks: list[np.ndarray] | None = None,
    min_overlap: float = 0.5,
) -> Blob:
    """Pick the gesturing hand: the blob whose topmost row is smallest.

    When a foreground mask is given, blobs overlapping it by less than
    ``min_overlap`` of their area are discarded first (``blob_masks`` must
    then carry each blob's pixel mask). Ties break toward larger area, then
    smaller min-column.
    """
    candidates = blobs
    if foreground is not None:
        if blob_masks is None:
            raise ValueError("foreground filtering requires blob_masks")
        candidates = [
            b
            for b, m in zip(blobs, blob_masks)
            if float(foreground.bits[m].sum()) / b.area >= min_overlap
        ]
    if not candidates:
        raise NoHandDetected("no blob survived foreground filtering")
    return min(candidates, key=lambda b: (b.top_row, -b.area, b.bbox[1]))


def _face_region(
    sequence: GestureSequence, frame: Frame, cfg: ExtractionConfig
) -> tuple[int, int, int, int]:
    if cfg.face_source == "annotation" and sequence.face_bbox is not None:
        return sequence.face_bbox
    rows = int(round(frame.height * cfg.face_band_rows))
    col_lo = int(round(frame.width * (0.5 - cfg.face_band_cols / 2)))
    col_hi = int(round(frame.width * (0.5 + cfg.face_band_cols / 2))) - 1
    return (0, col_lo, rows - 1, col_hi)


def _zero_region(frame: Frame, bbox: tuple[int, int, int, int]) -> Frame:
    r0, c0, r1, c1 = bbox
    px = frame.pixels.copy()
    px[max(r0, 0) : r1 + 1, max(c0, 0) : c1 + 1] = 0
    return Frame(px)


def extract_snapshot(
    sequence: GestureSequence,
    cfg: ExtractionConfig | None = None,
    gate: GateDecision | None = None,
) -> Snapshot | None:
    """Run the peak-extraction pipeline; returns None when the gate is off.

    Raises NoHandDetected when no skin blob survives; callers may substitute
    an all-zero snapshot and record the fallback.
    """
    cfg = cfg or ExtractionConfig()
    if len(sequence) < 3:
        raise SequenceTooShort(f"extraction needs >= 3 frames, got {len(sequence)}")
    if gate is not None and not gate.snapshot_enabled:
        return None

    peak = detect_peak(sequence)
    frame = sequence.frames[peak]
    color = frame if frame.channels == 3 else Frame(np.repeat(frame.pixels[:, :, None], 3, axis=2))
    defaced = _zero_region(color, _face_region(sequence, frame, cfg))

    mask = skin_mask(rgb_to_ycbcr(defaced), cfg.cb_range, cfg.cr_range)
    if cfg.morphology:
        mask = morph(morph(mask, "erode", cfg.morph_radius), "dilate", cfg.morph_radius)

    foreground = None
    if cfg.background_removal:
        grays = [f if f.channels == 1 else to_grayscale(f) for f in sequence.frames]
        foreground = background_foreground(grays, cfg.bg_frames, cfg.fg_threshold)[peak]

    blobs = connected_components(mask)
    if not blobs:
        raise NoHandDetected(f"no skin blob at peak of {sequence.sequence_id}")
    blob_masks = None
    if foreground is not None:
        from scipy import ndimage

        labels, _ = ndimage.label(mask.bits, structure=np.ones((3, 3), dtype=bool))
        blob_masks = [labels == i for i in range(1, len(blobs) + 1)]
    hand = select_hand_blob(
        blobs, foreground, blob_masks=blob_masks, min_overlap=cfg.foreground_overlap
    )

    gray = frame if frame.channels == 1 else to_grayscale(frame)
    image = crop_resize(
        gray, hand.bbox, cfg.crop_margin, out_w=SNAPSHOT_WIDTH, out_h=SNAPSHOT_HEIGHT
    )
    return Snapshot(
        image=image,
        source_index=peak,
        blob=hand,
        snapshot_enabled=True if gate is None else gate.snapshot_enabled,
    )
