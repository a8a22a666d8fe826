"""Dataset manifests, gesture assembly, and stratified splitting.

A manifest is JSON-lines: one object per sequence with ``path``, ``label``,
``subject``, and optional ``start``/``end`` (frame cut for isolating gestures
from continuous recordings) and ``face_bbox`` (min_row, min_col, max_row,
max_col). Sequence directories hold zero-padded numbered frame files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ManifestParseError, StratificationError
from .frame_io import read_frame
from .imaging import Frame

__all__ = [
    "ManifestEntry",
    "GestureSequence",
    "SplitPlan",
    "load_manifest",
    "load_sequence",
    "cut_isolated",
    "stratified_split",
    "kfold",
    "class_names",
]

_FRAME_SUFFIXES = (".png", ".pgm", ".ppm")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    subject: str = ""
    start: int | None = None
    end: int | None = None
    face_bbox: tuple[int, int, int, int] | None = None


@dataclass(frozen=True)
class GestureSequence:
    """An isolated gesture: ordered frames plus identifying metadata."""

    sequence_id: str
    frames: list[Frame]
    label: str = ""
    subject: str = ""
    face_bbox: tuple[int, int, int, int] | None = None

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/test index lists over a dataset, plus provenance."""

    train: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    stratified: bool = True

    def to_json(self) -> str:
        return json.dumps(
            {
                "train": list(self.train),
                "test": list(self.test),
                "seed": self.seed,
                "stratified": self.stratified,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        obj = json.loads(text)
        return cls(
            train=tuple(obj["train"]),
            test=tuple(obj["test"]),
            seed=obj["seed"],
            stratified=obj["stratified"],
        )


def load_manifest(path: Path | str, classes: list[str] | None = None) -> list[ManifestEntry]:
    """Parse and validate a JSON-lines manifest.

    When ``classes`` is given, rows with labels outside it are rejected.
    Raises ManifestParseError with the offending 1-based row number.
    """
    entries = []
    text = Path(path).read_text()
    for row, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(row, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise ManifestParseError(row, "expected a JSON object")
        try:
            entry = ManifestEntry(
                path=str(obj["path"]),
                label=str(obj["label"]),
                subject=str(obj.get("subject", "")),
                start=obj.get("start"),
                end=obj.get("end"),
                face_bbox=tuple(obj["face_bbox"]) if obj.get("face_bbox") else None,
            )
        except KeyError as exc:
            raise ManifestParseError(row, f"missing field {exc.args[0]!r}") from exc
        if (entry.start is None) != (entry.end is None):
            raise ManifestParseError(row, "start and end must be given together")
        if entry.start is not None and not entry.start < entry.end:
            raise ManifestParseError(row, f"start {entry.start} must be < end {entry.end}")
        if classes is not None and entry.label not in classes:
            raise ManifestParseError(row, f"unknown label {entry.label!r}")
        entries.append(entry)
    return entries


def class_names(entries: list[ManifestEntry]) -> list[str]:
    """Deterministic class order: sorted unique labels."""
    return sorted({e.label for e in entries})


def load_sequence(entry: ManifestEntry, root: Path | str = ".") -> GestureSequence:
    """Load a sequence directory's frames (sorted by filename) and apply the
    entry's start/end cut when present."""
    directory = Path(root) / entry.path
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in _FRAME_SUFFIXES
    )
    if not files:
        raise FileNotFoundError(f"no frame files under {directory}")
    seq = GestureSequence(
        sequence_id=entry.path,
        frames=[read_frame(p) for p in files],
        label=entry.label,
        subject=entry.subject,
        face_bbox=entry.face_bbox,
    )
    if entry.start is not None:
        seq = cut_isolated(seq, entry.start, entry.end)
    return seq


def cut_isolated(sequence: GestureSequence, start: int, end: int) -> GestureSequence:
    """Retain frames[start:end); frames are carried over by reference."""
    if not 0 <= start < end <= len(sequence):
        raise IndexError(
            f"cut [{start}, {end}) out of range for {len(sequence)} frames"
        )
    return replace(sequence, frames=sequence.frames[start:end])


def _indices_by_class(labels: list[str]) -> dict[str, list[int]]:
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    return by_class


def stratified_split(
    entries: list[ManifestEntry], test_frac: float = 0.3, seed: int = 0
) -> SplitPlan:
    """Per-class shuffled train/test split, deterministic under seed.

    Each class contributes round(test_frac * n) test samples, clamped so both
    sides stay nonempty; classes with a single sample are rejected.
    """
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train: list[int] = []
    test: list[int] = []
    by_class = _indices_by_class([e.label for e in entries])
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        if len(idx) < 2:
            raise StratificationError(f"class {label!r} has fewer than 2 samples")
        rng.shuffle(idx)
        n_test = int(round(test_frac * len(idx)))
        n_test = min(max(n_test, 1), len(idx) - 1)
        test.extend(idx[:n_test].tolist())
        train.extend(idx[n_test:].tolist())
    return SplitPlan(train=tuple(sorted(train)), test=tuple(sorted(test)), seed=seed)


def kfold(entries: list[ManifestEntry], k: int = 3, seed: int = 0) -> list[SplitPlan]:
    """k stratified folds; every sample lands in exactly one test fold."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    by_class = _indices_by_class([e.label for e in entries])
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        if len(idx) < k:
            raise StratificationError(
                f"class {label!r} has {len(idx)} samples, fewer than k={k}"
            )
        rng.shuffle(idx)
        for j, sample in enumerate(idx.tolist()):
            folds[j % k].append(sample)
    plans = []
    all_indices = set(range(len(entries)))
    for fold in folds:
        test = sorted(fold)
        train = sorted(all_indices - set(fold))
        plans.append(SplitPlan(train=tuple(train), test=tuple(test), seed=seed))
    return plans
