"""Per-gesture motion profiles and the static-channel gate.

A profile is the inverted-SSIM time series of a gesture measured against its
first frame, split into three parts of (floor-boundary) equal length. The
middle part's mean motion decides whether the gesture pauses long enough at
its peak for a snapshot to be worth capturing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GestureSequence
from .errors import EmptyCorpus, SequenceTooShort
from .imaging import Frame, SsimParams, issim, to_grayscale

__all__ = [
    "MotionProfile",
    "GateDecision",
    "thirds_boundaries",
    "compute_profile",
    "static_gate",
    "calibrate_threshold",
]

# Enabled fractions observed per gesture domain; used as calibration targets.
GRIT_LIKE_ENABLED_FRAC = 0.44
MONTALBANO_LIKE_ENABLED_FRAC = 0.70


def thirds_boundaries(n: int) -> tuple[int, int]:
    """Part boundaries at floor(n/3) and floor(2n/3); remainder frames fall
    to the last part."""
    return n // 3, (2 * n) // 3


@dataclass(frozen=True)
class MotionProfile:
    sequence_id: str
    values: tuple[float, ...]
    boundaries: tuple[int, int]
    part_means: tuple[float, float, float]

    @property
    def middle_mean(self) -> float:
        return self.part_means[1]

    def part_of(self, index: int) -> int:
        """1-based part id of a frame index."""
        b1, b2 = self.boundaries
        if index < b1:
            return 1
        return 2 if index < b2 else 3


@dataclass(frozen=True)
class GateDecision:
    middle_mean: float
    threshold: float
    snapshot_enabled: bool
    dynamics_class: str  # "paused" | "repeating_pattern"


def compute_profile(
    sequence: GestureSequence, params: SsimParams | None = None
) -> MotionProfile:
    """ISSIM of every frame against frame 0, with thirds statistics.

    Color frames are converted to grayscale first. values[0] is exactly 0.
    """
    n = len(sequence)
    if n < 3:
        raise SequenceTooShort(f"profile needs >= 3 frames, got {n}")
    grays = [
        f if f.channels == 1 else to_grayscale(f) for f in sequence.frames
    ]
    reference = grays[0]
    values = [issim(g, reference, params) for g in grays]
    b1, b2 = thirds_boundaries(n)
    arr = np.asarray(values)
    means = (
        float(arr[:b1].mean()),
        float(arr[b1:b2].mean()),
        float(arr[b2:].mean()),
    )
    return MotionProfile(
        sequence_id=sequence.sequence_id,
        values=tuple(values),
        boundaries=(b1, b2),
        part_means=means,
    )


def static_gate(profile: MotionProfile, threshold: float) -> GateDecision:
    """Enable the snapshot channel iff middle-part mean motion is strictly
    below the threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    enabled = profile.middle_mean < threshold
    return GateDecision(
        middle_mean=profile.middle_mean,
        threshold=threshold,
        snapshot_enabled=enabled,
        dynamics_class="paused" if enabled else "repeating_pattern",
    )


def calibrate_threshold(
    profiles: list[MotionProfile], target_enabled_frac: float
) -> float:
    """Threshold at the target quantile of middle-part means (linear
    interpolation), so roughly that fraction of the corpus gates on."""
    if not profiles:
        raise EmptyCorpus("no profiles to calibrate against")
    if len(profiles) < 2:
        raise EmptyCorpus("calibration needs at least 2 profiles")
    if not 0 < target_enabled_frac < 1:
        raise ValueError("target_enabled_frac must lie strictly in (0, 1)")
    means = np.array([p.middle_mean for p in profiles])
    return float(np.quantile(means, target_enabled_frac))
