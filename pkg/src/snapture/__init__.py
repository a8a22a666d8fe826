"""Hybrid static/dynamic hand-gesture recognition toolkit."""

__version__ = "0.1.0"

from . import (
    data,
    errors,
    frame_io,
    imaging,
    model,
    motion_profile,
    neuralnet,
    snapshot,
    synth,
    train_eval,
)

__all__ = [
    "data",
    "errors",
    "frame_io",
    "imaging",
    "model",
    "motion_profile",
    "neuralnet",
    "snapshot",
    "synth",
    "train_eval",
    "__version__",
]
