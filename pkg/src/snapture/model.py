"""The gesture classifier variants and their end-to-end pipeline.

Three variants share one codebase: ``cnnlstm`` (dynamic channel only),
``snapture`` (dynamic + always-on static snapshot channel), and
``snapture_thold`` (static channel gated by middle-third motion). The
dynamic channel runs a two-stage CNN per differential frame, feeds the
embeddings to a stateless two-layer LSTM, and classifies from the last valid
hidden state; the static channel applies the same CNN topology (independent
weights) to the peak snapshot. Fusion concatenates both feature vectors
ahead of a hidden layer and softmax.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import GestureSequence
from .errors import ConfigError, NoHandDetected, SequenceTooShort, ShapeError
from .imaging import Frame, SsimParams, crop_resize, differential_image, to_grayscale
from .motion_profile import compute_profile, static_gate
from .neuralnet import (
    BatchNorm2d,
    Conv2d,
    Linear,
    StackedLstm,
    Tensor,
    concat,
    dropout,
    gather_steps,
    maxpool2d,
    narrow,
    no_grad,
    reshape,
    softmax_xent,
    tanh,
)
from .neuralnet.checkpoint import load_checkpoint, save_checkpoint
from .snapshot import ExtractionConfig, extract_snapshot

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "PreprocessParams",
    "PreparedSample",
    "Prediction",
    "SnaptureModel",
    "build",
    "preprocess_sequence",
    "build_batch",
]

VARIANTS = ("cnnlstm", "snapture", "snapture_thold")


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    num_classes: int
    input_width: int = 64
    input_height: int = 48
    conv1_channels: int = 5
    conv1_kernel: int = 11
    conv2_channels: int = 10
    conv2_kernel: int = 6
    cnn_ff_width: int = 256
    lstm_hidden: int = 64
    lstm_layers: int = 2
    dropout_rate: float = 0.2
    fusion_width: int = 128
    gate_threshold: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.input_width < 4 or self.input_height < 4:
            raise ConfigError("input must be at least 4x4 for two pooling stages")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    @property
    def has_static_channel(self) -> bool:
        return self.variant != "cnnlstm"

    @property
    def flattened_size(self) -> int:
        return (self.input_height // 4) * (self.input_width // 4) * self.conv2_channels

    def channel_parameter_count(self) -> int:
        c1, k1 = self.conv1_channels, self.conv1_kernel
        c2, k2 = self.conv2_channels, self.conv2_kernel
        conv1 = c1 * k1 * k1 + c1
        conv2 = c2 * c1 * k2 * k2 + c2
        norms = 2 * c1 + 2 * c2
        ff = self.cnn_ff_width * self.flattened_size + self.cnn_ff_width
        return conv1 + conv2 + norms + ff

    def parameter_count(self) -> int:
        """Closed-form total over all declared layer shapes."""
        h = self.lstm_hidden
        total = self.channel_parameter_count()
        lstm_in = self.cnn_ff_width
        for _ in range(self.lstm_layers):
            total += 4 * h * lstm_in + 4 * h * h + 4 * h
            lstm_in = h
        if self.has_static_channel:
            total += self.channel_parameter_count()
            fused = h + self.cnn_ff_width
            total += self.fusion_width * fused + self.fusion_width
            total += self.num_classes * self.fusion_width + self.num_classes
        else:
            total += self.num_classes * h + self.num_classes
        return total

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "num_classes": self.num_classes,
            "input_width": self.input_width,
            "input_height": self.input_height,
            "conv1_channels": self.conv1_channels,
            "conv1_kernel": self.conv1_kernel,
            "conv2_channels": self.conv2_channels,
            "conv2_kernel": self.conv2_kernel,
            "cnn_ff_width": self.cnn_ff_width,
            "lstm_hidden": self.lstm_hidden,
            "lstm_layers": self.lstm_layers,
            "dropout_rate": self.dropout_rate,
            "fusion_width": self.fusion_width,
            "gate_threshold": self.gate_threshold,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass(frozen=True)
class PreprocessParams:
    """Everything the raw-frames-to-tensors pipeline needs."""

    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    ssim: SsimParams = field(default_factory=SsimParams)
    diff_threshold: int = 25


@dataclass
class PreparedSample:
    """Model-ready tensors for one gesture, variant-independent.

    The snapshot is extracted unconditionally; gating decides at batch time
    whether it is fed or replaced by zeros, which matches the gated
    semantics because a gated-off static channel also zeroes its features.
    """

    sequence_id: str
    diffs: np.ndarray  # [T, 1, H, W] float32 in {0, 1}
    snapshot: np.ndarray  # [1, H, W] float32 in [0, 1]
    middle_mean: float
    label: str = ""
    label_index: int = -1
    snapshot_fallback: bool = False


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    label_index: int
    label: str | None
    gate_used: bool
    snapshot_fallback: bool = False


class _CnnChannel:
    """conv -> bn -> tanh -> pool, twice, then flatten and a tanh
    feed-forward embedding."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype):
        self.conv1 = Conv2d(1, cfg.conv1_channels, cfg.conv1_kernel, rng, dtype)
        self.bn1 = BatchNorm2d(cfg.conv1_channels, dtype)
        self.conv2 = Conv2d(cfg.conv1_channels, cfg.conv2_channels, cfg.conv2_kernel, rng, dtype)
        self.bn2 = BatchNorm2d(cfg.conv2_channels, dtype)
        self.ff = Linear(cfg.flattened_size, cfg.cnn_ff_width, rng, dtype)

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        h = maxpool2d(tanh(self.bn1(self.conv1(x), mode)))
        h = maxpool2d(tanh(self.bn2(self.conv2(h), mode)))
        flat = reshape(h, (h.data.shape[0], -1))
        return tanh(self.ff(flat))

    def params(self):
        for prefix, layer in (
            ("conv1", self.conv1),
            ("bn1", self.bn1),
            ("conv2", self.conv2),
            ("bn2", self.bn2),
            ("ff", self.ff),
        ):
            for name, t in layer.params():
                yield f"{prefix}.{name}", t

    def state(self):
        for prefix, layer in (("bn1", self.bn1), ("bn2", self.bn2)):
            for name, arr in layer.state():
                yield f"{prefix}.{name}", arr


class SnaptureModel:
    def __init__(
        self,
        config: ModelConfig,
        seed: int = 0,
        class_names: list[str] | None = None,
        dtype=np.float32,
    ):
        if class_names is not None and len(class_names) != config.num_classes:
            raise ConfigError("class_names length must equal num_classes")
        self.config = config
        self.seed = seed
        self.class_names = list(class_names) if class_names else None
        self.dtype = np.dtype(dtype)

        # Independent init streams keep the dynamic channel bit-identical
        # across variants built from the same seed.
        rng_dynamic = np.random.default_rng([seed, 0])
        rng_static = np.random.default_rng([seed, 1])
        rng_lstm = np.random.default_rng([seed, 2])
        rng_head = np.random.default_rng([seed, 3])

        self.dynamic = _CnnChannel(config, rng_dynamic, dtype)
        self.lstm = StackedLstm(
            config.cnn_ff_width, config.lstm_hidden, config.lstm_layers, rng_lstm, dtype
        )
        if config.has_static_channel:
            self.static = _CnnChannel(config, rng_static, dtype)
            fused = config.lstm_hidden + config.cnn_ff_width
            self.fusion = Linear(fused, config.fusion_width, rng_head, dtype)
            self.head = Linear(config.fusion_width, config.num_classes, rng_head, dtype)
        else:
            self.static = None
            self.fusion = None
            self.head = Linear(config.lstm_hidden, config.num_classes, rng_head, dtype)

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, t in self.dynamic.params():
            out[f"dynamic.{name}"] = t
        for name, t in self.lstm.params():
            out[f"lstm.{name}"] = t
        if self.static is not None:
            for name, t in self.static.params():
                out[f"static.{name}"] = t
            for name, t in self.fusion.params():
                out[f"fusion.{name}"] = t
        for name, t in self.head.params():
            out[f"head.{name}"] = t
        return out

    def named_state(self) -> dict[str, np.ndarray]:
        out = {}
        for name, arr in self.dynamic.state():
            out[f"dynamic.{name}"] = arr
        if self.static is not None:
            for name, arr in self.static.state():
                out[f"static.{name}"] = arr
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_params().values())

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def dynamic_forward(
        self,
        diffs: np.ndarray,
        lengths: np.ndarray | None = None,
        mode: str = "eval",
    ) -> Tensor:
        """Differential sequence [N, T, 1, H, W] to the final top-layer
        hidden state [N, hidden] at each sequence's last valid step."""
        if diffs.ndim != 5:
            raise ShapeError("expected [N, T, 1, H, W] differential input")
        n, t_max = diffs.shape[:2]
        if lengths is None:
            lengths = np.full(n, t_max, dtype=np.intp)
        frames = np.ascontiguousarray(
            diffs.transpose(1, 0, 2, 3, 4).reshape(t_max * n, 1, *diffs.shape[3:]),
            dtype=self.dtype,
        )
        emb = self.dynamic(Tensor(frames), mode)
        steps = [narrow(emb, 0, t * n, n) for t in range(t_max)]
        top = self.lstm(steps)
        if t_max == 1:
            return top[0]
        return gather_steps(top, np.asarray(lengths, dtype=np.intp) - 1)

    def static_forward(
        self, snapshots: np.ndarray, gates: np.ndarray, mode: str = "eval"
    ) -> Tensor:
        """Snapshot batch [N, 1, H, W] to static features; gated-off rows
        feed zero snapshots and have their features forced to zero."""
        if self.static is None:
            raise ConfigError("variant has no static channel")
        gate_col = np.asarray(gates, dtype=self.dtype).reshape(-1, 1)
        snap_in = snapshots.astype(self.dtype) * gate_col[:, :, None, None]
        feats = self.static(Tensor(snap_in), mode)
        from .neuralnet import mul

        return mul(feats, Tensor(gate_col))

    def fuse_and_classify(
        self,
        hidden: Tensor,
        static_feats: Tensor | None,
        mode: str = "eval",
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        rng = rng or np.random.default_rng(0)
        if self.config.has_static_channel:
            if static_feats is None:
                raise ShapeError("fusion variants need static features")
            fused = concat([hidden, static_feats], axis=1)
            fused = dropout(fused, self.config.dropout_rate, mode, rng)
            return self.head(tanh(self.fusion(fused)))
        h = dropout(hidden, self.config.dropout_rate, mode, rng)
        return self.head(h)

    def forward_batch(
        self,
        diffs: np.ndarray,
        lengths: np.ndarray,
        snapshots: np.ndarray | None,
        gates: np.ndarray | None,
        mode: str,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        hidden = self.dynamic_forward(diffs, lengths, mode)
        static_feats = None
        if self.config.has_static_channel:
            if snapshots is None or gates is None:
                raise ShapeError("fusion variants need snapshots and gates")
            static_feats = self.static_forward(snapshots, gates, mode)
        return self.fuse_and_classify(hidden, static_feats, mode, rng)

    def predict(
        self,
        sequence: GestureSequence,
        params: PreprocessParams | None = None,
        threshold: float | None = None,
    ) -> Prediction:
        """End-to-end single-sequence classification in eval mode."""
        params = params or PreprocessParams()
        threshold = threshold if threshold is not None else self.config.gate_threshold
        if self.config.variant == "snapture_thold" and threshold is None:
            raise ConfigError("snapture_thold needs a gate threshold")
        sample = preprocess_sequence(sequence, params, self.config)

        if self.config.variant == "snapture_thold":
            gate = sample.middle_mean < threshold
        else:
            gate = self.config.has_static_channel
        with no_grad():
            logits = self.forward_batch(
                sample.diffs[None],
                np.array([sample.diffs.shape[0]]),
                sample.snapshot[None] if self.config.has_static_channel else None,
                np.array([gate]) if self.config.has_static_channel else None,
                mode="eval",
            )
            _, probs = softmax_xent_probs(logits)
        index = int(probs[0].argmax())
        return Prediction(
            probabilities=probs[0],
            label_index=index,
            label=self.class_names[index] if self.class_names else None,
            gate_used=bool(gate) if self.config.has_static_channel else False,
            snapshot_fallback=sample.snapshot_fallback,
        )

    def save(self, path, extra_config: dict | None = None):
        if self.dtype != np.float32:
            raise ConfigError("only float32 models are checkpointed")
        tensors = {name: t.data for name, t in self.named_params().items()}
        tensors.update(self.named_state())
        config = {
            "model": self.config.to_dict(),
            "seed": self.seed,
            "class_names": self.class_names,
        }
        if extra_config:
            config.update(extra_config)
        save_checkpoint(path, config, tensors)

    @classmethod
    def load(cls, path) -> "SnaptureModel":
        config, tensors = load_checkpoint(path)
        model = cls(
            ModelConfig.from_dict(config["model"]),
            seed=config.get("seed", 0),
            class_names=config.get("class_names"),
        )
        for name, t in model.named_params().items():
            t.data = tensors[name].copy()
        state = model.named_state()
        for name in state:
            state[name][...] = tensors[name]
        return model


def softmax_xent_probs(logits: Tensor) -> tuple[None, np.ndarray]:
    """Probabilities without a loss (prediction path)."""
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return None, exps / exps.sum(axis=1, keepdims=True)


def build(
    config: ModelConfig,
    seed: int = 0,
    class_names: list[str] | None = None,
    dtype=np.float32,
) -> SnaptureModel:
    return SnaptureModel(config, seed=seed, class_names=class_names, dtype=dtype)


def preprocess_sequence(
    sequence: GestureSequence,
    params: PreprocessParams | None = None,
    config: ModelConfig | None = None,
    label_index: int = -1,
) -> PreparedSample:
    """Raw frames to model tensors: resized grayscale differential masks,
    the (always-extracted) peak snapshot, and the middle-third motion mean.

    The motion profile is computed on the native-resolution frames; the
    differential masks on frames resized to the model input size.
    """
    params = params or PreprocessParams()
    in_w = config.input_width if config else 64
    in_h = config.input_height if config else 48
    if len(sequence) < 3:
        raise SequenceTooShort(f"need >= 3 frames, got {len(sequence)}")

    grays = [f if f.channels == 1 else to_grayscale(f) for f in sequence.frames]
    if grays[0].width != in_w or grays[0].height != in_h:
        full = (0, 0, grays[0].height - 1, grays[0].width - 1)
        resized = [crop_resize(g, full, 0.0, out_w=in_w, out_h=in_h) for g in grays]
    else:
        resized = grays

    diffs = np.stack(
        [
            differential_image(
                resized[i - 1], resized[i], resized[i + 1], params.diff_threshold
            ).bits
            for i in range(1, len(resized) - 1)
        ]
    ).astype(np.float32)[:, None, :, :]

    profile = compute_profile(sequence, params.ssim)

    fallback = False
    try:
        snap = extract_snapshot(sequence, params.extraction, gate=None)
        image = snap.image.pixels.astype(np.float32) / 255.0
    except NoHandDetected:
        image = np.zeros((in_h, in_w), dtype=np.float32)
        fallback = True
    if image.shape != (in_h, in_w):
        raise ShapeError(
            f"snapshot {image.shape} does not match model input {(in_h, in_w)}"
        )

    return PreparedSample(
        sequence_id=sequence.sequence_id,
        diffs=diffs,
        snapshot=image[None],
        middle_mean=profile.middle_mean,
        label=sequence.label,
        label_index=label_index,
        snapshot_fallback=fallback,
    )


def build_batch(
    samples: list[PreparedSample],
    threshold: float | None,
    variant: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None, np.ndarray]:
    """Pad a list of prepared samples into batch arrays.

    Returns (diffs [N, Tmax, 1, H, W], lengths, snapshots, gates, labels);
    snapshots/gates are None for the cnnlstm variant.
    """
    n = len(samples)
    t_max = max(s.diffs.shape[0] for s in samples)
    h, w = samples[0].diffs.shape[2:]
    diffs = np.zeros((n, t_max, 1, h, w), dtype=np.float32)
    lengths = np.empty(n, dtype=np.intp)
    labels = np.array([s.label_index for s in samples])
    for i, s in enumerate(samples):
        t = s.diffs.shape[0]
        diffs[i, :t] = s.diffs
        lengths[i] = t
    if variant == "cnnlstm":
        return diffs, lengths, None, None, labels
    snapshots = np.stack([s.snapshot for s in samples])
    if variant == "snapture":
        gates = np.ones(n, dtype=bool)
    else:
        if threshold is None:
            raise ConfigError("snapture_thold needs a gate threshold")
        gates = np.array([s.middle_mean < threshold for s in samples])
    return diffs, lengths, snapshots, gates, labels
