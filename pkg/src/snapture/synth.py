"""Synthetic gesture corpus: a skin-colored shape moving over a black
background, with a face blob in the top band and a resting-hand blob near
the bottom.

Paused classes oscillate, freeze at their starting pose through the middle
third (so mid-sequence motion versus the first frame is low), then oscillate
again; repeating-pattern classes move continuously and can smear the hand
across sub-positions near the peak to simulate motion blur. Classes sharing
a ``pair_group`` draw their per-index trajectories from the same stream, so
sample j of each class follows the identical path and differs only in hand
shape.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import GestureSequence, ManifestEntry
from .errors import ConfigError
from .frame_io import write_ppm
from .imaging import Frame

__all__ = [
    "ClassSpec",
    "SynthSpec",
    "benchmark_spec",
    "generate_corpus",
    "write_corpus",
]

SKIN_FILL = (200, 120, 100)  # YCbCr ~ (142, 105, 170): inside the skin gate
SKIN_RING = (172, 104, 88)  # gray ~ 20 below fill: invisible to 25-threshold diffs

MOTIONS = ("hwave", "vbob", "circle", "zigzag")
SHAPES = ("disk", "disk_ring", "square", "triangle")


@dataclass(frozen=True)
class ClassSpec:
    name: str
    count: int
    motion: str
    shape: str
    paused: bool
    blur_at_peak: bool = False
    pair_group: str | None = None

    def __post_init__(self):
        if self.motion not in MOTIONS:
            raise ConfigError(f"unknown motion {self.motion!r}")
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown shape {self.shape!r}")
        if self.count < 1:
            raise ConfigError("class count must be >= 1")


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple[ClassSpec, ...]
    width: int = 128
    height: int = 96
    min_length: int = 12
    max_length: int = 14
    with_face: bool = True
    with_resting_hand: bool = True

    def __post_init__(self):
        if not self.classes:
            raise ConfigError("need at least one class")
        if self.min_length < 6 or self.max_length < self.min_length:
            raise ConfigError("lengths must satisfy 6 <= min <= max")
        groups: dict[str, list[ClassSpec]] = {}
        for spec in self.classes:
            if spec.pair_group:
                groups.setdefault(spec.pair_group, []).append(spec)
        for group, members in groups.items():
            motions = {m.motion for m in members}
            counts = {m.count for m in members}
            pauses = {m.paused for m in members}
            if len(motions) > 1 or len(counts) > 1 or len(pauses) > 1:
                raise ConfigError(
                    f"pair group {group!r} members must share motion, count, and pacing"
                )

    def to_dict(self) -> dict:
        return {
            "classes": [vars(c) for c in self.classes],
            "width": self.width,
            "height": self.height,
            "min_length": self.min_length,
            "max_length": self.max_length,
            "with_face": self.with_face,
            "with_resting_hand": self.with_resting_hand,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthSpec":
        classes = tuple(ClassSpec(**c) for c in obj["classes"])
        rest = {k: v for k, v in obj.items() if k != "classes"}
        return cls(classes=classes, **rest)


def benchmark_spec(sequences_per_class: int = 40) -> SynthSpec:
    """Five classes: an identical-motion pair distinguishable only by hand
    shape, a third paused class, and two blurred repeating-pattern classes."""
    return SynthSpec(
        classes=(
            ClassSpec("push_flat", sequences_per_class, "hwave", "disk", True, pair_group="push"),
            ClassSpec("push_ring", sequences_per_class, "hwave", "disk_ring", True, pair_group="push"),
            ClassSpec("raise_hold", sequences_per_class, "vbob", "square", True),
            ClassSpec("orbit", sequences_per_class, "circle", "disk", False, blur_at_peak=True),
            ClassSpec("sweep", sequences_per_class, "zigzag", "triangle", False, blur_at_peak=True),
        )
    )


def _key(name: str) -> int:
    return zlib.crc32(name.encode())


def _triangle_wave(u: np.ndarray) -> np.ndarray:
    return 2.0 * np.abs(2.0 * (u % 1.0) - 1.0) - 1.0


def _trajectory(
    spec: ClassSpec, rng: np.random.Generator, length: int
) -> np.ndarray:
    """Per-frame (row, col) hand centers. Paused kinds hold at the start
    pose (plus 1px wobble) through the middle third."""
    base = np.array(
        [54 + rng.integers(-3, 4), 64 + rng.integers(-5, 6)], dtype=np.float64
    )
    phase = rng.uniform(0, 2 * np.pi)
    amp_scale = rng.uniform(0.9, 1.1)
    path = np.tile(base, (length, 1))

    if spec.paused:
        b1, b2 = length // 3, (2 * length) // 3
        hold = set(range(max(1, b1 - 1), min(length - 1, b2 + 1) + 1))
        active = [i for i in range(1, length) if i not in hold]
        for j, i in enumerate(active):
            u = (j + 1) / (len(active) + 1)
            swing = np.sin(2 * np.pi * 1.25 * u + phase)
            if spec.motion == "hwave":
                path[i, 1] += 20.0 * amp_scale * swing
            elif spec.motion == "vbob":
                path[i, 0] -= 16.0 * amp_scale * np.abs(swing)
            else:
                raise ConfigError(f"motion {spec.motion!r} is not a paused pattern")
        for j, i in enumerate(sorted(hold)):
            path[i, 0] += float(j % 2)  # sub-pixel-scale wobble during the pause
    else:
        u = np.arange(length) / (length - 1)
        if spec.motion == "circle":
            turns = rng.uniform(1.5, 2.0)
            theta = phase + 2 * np.pi * turns * u
            path[:, 0] += 16.0 * amp_scale * np.sin(theta)
            path[:, 1] += 16.0 * amp_scale * np.cos(theta)
        elif spec.motion == "zigzag":
            cycles = rng.uniform(1.3, 1.7)
            s = _triangle_wave(cycles * u + phase / (2 * np.pi))
            path[:, 0] += 15.0 * amp_scale * s
            path[:, 1] -= 15.0 * amp_scale * s
        else:
            raise ConfigError(f"motion {spec.motion!r} is not a repeating pattern")
    return path


def _shape_masks(
    shape: str, cy: int, cx: int, height: int, width: int
) -> tuple[np.ndarray, np.ndarray | None]:
    rows = np.arange(height)[:, None] - cy
    cols = np.arange(width)[None, :] - cx
    if shape in ("disk", "disk_ring"):
        dist2 = rows * rows + cols * cols
        body = dist2 <= 13 * 13
        ring = ((dist2 >= 5 * 5) & (dist2 <= 9 * 9)) if shape == "disk_ring" else None
        return body, ring
    if shape == "square":
        return (np.abs(rows) <= 11) & (np.abs(cols) <= 11), None
    if shape == "triangle":
        return (rows >= -13) & (rows <= 13) & (np.abs(cols) <= (rows + 13) / 2), None
    raise ConfigError(f"unknown shape {shape!r}")


def _draw_disk(img: np.ndarray, cy: int, cx: int, radius: int, color):
    rows = np.arange(img.shape[0])[:, None] - cy
    cols = np.arange(img.shape[1])[None, :] - cx
    img[rows * rows + cols * cols <= radius * radius] = color


def _draw_hand(img: np.ndarray, shape: str, cy: int, cx: int):
    body, ring = _shape_masks(shape, cy, cx, img.shape[0], img.shape[1])
    img[body] = SKIN_FILL
    if ring is not None:
        img[ring] = SKIN_RING


FACE_CENTER = (11, 64)
FACE_RADIUS = 9
REST_CENTER = (88, 20)
REST_RADIUS = 4


def _scene(spec: SynthSpec) -> np.ndarray:
    img = np.zeros((spec.height, spec.width, 3), dtype=np.uint8)
    if spec.with_face:
        _draw_disk(img, *FACE_CENTER, FACE_RADIUS, SKIN_FILL)
    if spec.with_resting_hand:
        _draw_disk(img, *REST_CENTER, REST_RADIUS, SKIN_FILL)
    return img


def _render(
    spec: SynthSpec, cls: ClassSpec, positions: list[tuple[float, float]]
) -> np.ndarray:
    scene = _scene(spec)
    if len(positions) == 1:
        img = scene.copy()
        cy, cx = positions[0]
        _draw_hand(img, cls.shape, int(round(cy)), int(round(cx)))
        return img
    acc = np.zeros((spec.height, spec.width, 3), dtype=np.float64)
    for cy, cx in positions:
        img = scene.copy()
        _draw_hand(img, cls.shape, int(round(cy)), int(round(cx)))
        acc += img
    return np.floor(acc / len(positions) + 0.5).astype(np.uint8)


def _face_bbox(spec: SynthSpec) -> tuple[int, int, int, int] | None:
    if not spec.with_face:
        return None
    cy, cx = FACE_CENTER
    r = FACE_RADIUS + 1
    return (max(0, cy - r), max(0, cx - r), cy + r, cx + r)


def generate_corpus(
    spec: SynthSpec, seed: int = 0
) -> tuple[list[GestureSequence], dict]:
    """Render every class's sequences; returns them plus generation metadata
    (per-sequence kind, length, blur flag, and integer trajectory)."""
    sequences: list[GestureSequence] = []
    meta_rows = []
    trajectories: dict[tuple[str, int], list[tuple[int, int]]] = {}

    for cls in spec.classes:
        stream_key = _key(cls.pair_group or cls.name)
        for j in range(cls.count):
            rng = np.random.default_rng([seed, 7, stream_key, j])
            length = int(rng.integers(spec.min_length, spec.max_length + 1))
            path = _trajectory(cls, rng, length)
            rounded = [(int(round(r)), int(round(c))) for r, c in path]
            peak = length // 2
            frames = []
            blurred = []
            for i in range(length):
                if cls.blur_at_peak and abs(i - peak) <= 1:
                    prev_pos = path[max(i - 1, 0)]
                    next_pos = path[min(i + 1, length - 1)]
                    delta = (next_pos - prev_pos) / 2.0
                    offsets = [path[i] + k * delta for k in np.linspace(-1.0, 1.0, 5)]
                    frames.append(Frame(_render(spec, cls, [tuple(p) for p in offsets])))
                    blurred.append(i)
                else:
                    frames.append(Frame(_render(spec, cls, [tuple(path[i])])))
            seq_id = f"{cls.name}_{j:03d}"
            sequences.append(
                GestureSequence(
                    sequence_id=seq_id,
                    frames=frames,
                    label=cls.name,
                    subject="synth",
                    face_bbox=_face_bbox(spec),
                )
            )
            meta_rows.append(
                {
                    "id": seq_id,
                    "label": cls.name,
                    "kind": "paused" if cls.paused else "repeating_pattern",
                    "length": length,
                    "blurred_frames": blurred,
                    "trajectory": rounded,
                }
            )
            if cls.pair_group:
                key = (cls.pair_group, j)
                if key in trajectories and trajectories[key] != rounded:
                    raise AssertionError(
                        f"pair group {cls.pair_group!r} trajectories diverged at index {j}"
                    )
                trajectories[key] = rounded

    meta = {"seed": seed, "spec": spec.to_dict(), "sequences": meta_rows}
    return sequences, meta


def write_corpus(
    out_dir: Path | str, sequences: list[GestureSequence], meta: dict
) -> Path:
    """Write frames (PPM), a JSON-lines manifest, and meta.json; returns the
    manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    for seq in sequences:
        seq_dir = out_dir / seq.sequence_id
        for i, frame in enumerate(seq.frames):
            write_ppm(seq_dir / f"frame_{i:03d}.ppm", frame)
        row = {
            "path": seq.sequence_id,
            "label": seq.label,
            "subject": seq.subject,
        }
        if seq.face_bbox is not None:
            row["face_bbox"] = list(seq.face_bbox)
        manifest_lines.append(json.dumps(row))
    manifest_path = out_dir / "manifest.jsonl"
    from .frame_io import atomic_write_bytes

    atomic_write_bytes(manifest_path, ("\n".join(manifest_lines) + "\n").encode())
    atomic_write_bytes(out_dir / "meta.json", json.dumps(meta, indent=1).encode())
    return manifest_path
