"""Training loop, metric computation, and the multi-trial protocol.

One trial = split the data (hold-out fraction or k folds), train a fresh
model, evaluate on the held-out part; all randomness (split, init, shuffle,
dropout) derives from the trial seed, so reruns are bit-identical. A report
aggregates n trials with mean/std per metric and the averaged confusion
matrix.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import ManifestEntry, SplitPlan, kfold, stratified_split
from .errors import ConfigError, TrainingDiverged
from .model import (
    ModelConfig,
    PreparedSample,
    PreprocessParams,
    SnaptureModel,
    build,
    build_batch,
    preprocess_sequence,
)
from .motion_profile import calibrate_threshold
from .neuralnet import no_grad, softmax_xent, zero_grads
from .neuralnet.optim import make_optimizer

__all__ = [
    "Hyperparams",
    "Metrics",
    "TrialReport",
    "RunProtocol",
    "prepare_dataset",
    "train",
    "evaluate",
    "run_trials",
    "metrics_from_confusion",
    "resolve_threshold",
]


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.001
    epochs: int = 40
    batch_size: int = 64
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    per_class_f1: tuple[float, ...]
    confusion: np.ndarray  # [K, K] counts, rows = true class
    train_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class_f1": list(self.per_class_f1),
            "confusion": self.confusion.tolist(),
            "train_time_s": self.train_time_s,
        }


@dataclass
class TrialReport:
    trials: list[Metrics]
    mean_accuracy: float
    std_accuracy: float
    mean_macro_f1: float
    std_macro_f1: float
    mean_confusion: np.ndarray
    mean_train_time_s: float

    def to_dict(self) -> dict:
        return {
            "trials": [t.to_dict() for t in self.trials],
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "mean_macro_f1": self.mean_macro_f1,
            "std_macro_f1": self.std_macro_f1,
            "mean_confusion": self.mean_confusion.tolist(),
            "mean_train_time_s": self.mean_train_time_s,
        }


@dataclass(frozen=True)
class RunProtocol:
    """Split scheme for one trial: k folds when ``folds`` is set, else a
    stratified hold-out of ``test_frac``."""

    test_frac: float = 0.3
    folds: int | None = None
    calibrate_frac: float | None = None
    threshold: float | None = None


def prepare_dataset(
    sequences: list,
    class_order: list[str],
    params: PreprocessParams | None = None,
    config: ModelConfig | None = None,
) -> list[PreparedSample]:
    index = {name: i for i, name in enumerate(class_order)}
    samples = []
    for seq in sequences:
        if seq.label not in index:
            raise ConfigError(f"label {seq.label!r} not in class order")
        samples.append(
            preprocess_sequence(seq, params, config, label_index=index[seq.label])
        )
    return samples


def resolve_threshold(
    train_samples: list[PreparedSample], protocol: RunProtocol
) -> float | None:
    """Fixed threshold if configured, else the calibration quantile of the
    training samples' middle-third means."""
    if protocol.threshold is not None:
        return protocol.threshold
    if protocol.calibrate_frac is None:
        return None
    means = np.array([s.middle_mean for s in train_samples])
    return float(np.quantile(means, protocol.calibrate_frac))


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    # A trailing singleton would break train-mode batch norm; merge it back.
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def train(
    model: SnaptureModel,
    samples: list[PreparedSample],
    hyper: Hyperparams,
    threshold: float | None = None,
) -> list[float]:
    """Shuffled mini-batch cross-entropy descent; returns per-epoch mean
    loss. Deterministic under the hyperparameter seed."""
    if not samples:
        raise ConfigError("empty training set")
    if hyper.batch_size > len(samples):
        raise ConfigError("batch size exceeds training-set size")
    rng = np.random.default_rng([hyper.seed, 17])
    params = model.parameters()
    optimizer = make_optimizer(hyper.optimizer, params, hyper.learning_rate)
    losses: list[float] = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for batch_idx in _batches(order, hyper.batch_size):
            batch = [samples[i] for i in batch_idx]
            diffs, lengths, snaps, gates, labels = build_batch(
                batch, threshold, model.config.variant
            )
            logits = model.forward_batch(diffs, lengths, snaps, gates, "train", rng)
            loss, _ = softmax_xent(logits, labels)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch)
            zero_grads(params)
            loss.backward()
            optimizer.step()
            total += value * len(batch)
        losses.append(total / len(samples))
    return losses


def metrics_from_confusion(confusion: np.ndarray, train_time_s: float = 0.0) -> Metrics:
    """Accuracy, per-class F1, and macro F1 from a counts matrix.

    Classes absent from both the rows and columns contribute an F1 of 0 to
    the macro average.
    """
    confusion = np.asarray(confusion)
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    k = confusion.shape[0]
    per_class = []
    for c in range(k):
        tp = confusion[c, c]
        fn = confusion[c].sum() - tp
        fp = confusion[:, c].sum() - tp
        denom = 2 * tp + fp + fn
        per_class.append(float(2 * tp / denom) if denom else 0.0)
    return Metrics(
        accuracy=accuracy,
        macro_f1=float(np.mean(per_class)),
        per_class_f1=tuple(per_class),
        confusion=confusion,
        train_time_s=train_time_s,
    )


def evaluate(
    model: SnaptureModel,
    samples: list[PreparedSample],
    threshold: float | None = None,
) -> Metrics:
    """Eval-mode predictions, one sample at a time (deterministic regardless
    of batch company), folded into a confusion matrix."""
    if not samples:
        raise ConfigError("empty test set")
    k = model.config.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    with no_grad():
        for sample in samples:
            diffs, lengths, snaps, gates, labels = build_batch(
                [sample], threshold, model.config.variant
            )
            logits = model.forward_batch(diffs, lengths, snaps, gates, "eval")
            predicted = int(logits.data[0].argmax())
            confusion[labels[0], predicted] += 1
    return metrics_from_confusion(confusion)


def _split_plans(
    labels: list[str], protocol: RunProtocol, seed: int
) -> list[SplitPlan]:
    entries = [ManifestEntry(path=str(i), label=label) for i, label in enumerate(labels)]
    if protocol.folds:
        return kfold(entries, protocol.folds, seed)
    return [stratified_split(entries, protocol.test_frac, seed)]


def run_single_trial(
    samples: list[PreparedSample],
    model_config: ModelConfig,
    hyper: Hyperparams,
    protocol: RunProtocol,
    trial_seed: int,
    class_names: list[str] | None = None,
) -> tuple[Metrics, list[float], float | None]:
    """Train+evaluate across the trial's fold(s); returns pooled metrics,
    the concatenated loss log, and the (last) resolved threshold."""
    k = model_config.num_classes
    plans = _split_plans([s.label for s in samples], protocol, trial_seed)
    confusion = np.zeros((k, k), dtype=np.int64)
    losses: list[float] = []
    train_time = 0.0
    threshold = None
    for fold_id, plan in enumerate(plans):
        train_set = [samples[i] for i in plan.train]
        test_set = [samples[i] for i in plan.test]
        threshold = resolve_threshold(train_set, protocol)
        model = build(
            model_config,
            seed=trial_seed * 31 + fold_id,
            class_names=class_names,
        )
        fold_hyper = replace(hyper, seed=trial_seed * 131 + fold_id)
        start = time.perf_counter()
        losses.extend(train(model, train_set, fold_hyper, threshold))
        train_time += time.perf_counter() - start
        confusion += evaluate(model, test_set, threshold).confusion
    metrics = metrics_from_confusion(confusion, train_time_s=train_time)
    return metrics, losses, threshold


def run_trials(
    samples: list[PreparedSample],
    model_config: ModelConfig,
    hyper: Hyperparams,
    protocol: RunProtocol,
    n_trials: int = 5,
    base_seed: int = 0,
    class_names: list[str] | None = None,
) -> TrialReport:
    """n independent trials with seeds base_seed + 0..n-1."""
    if n_trials < 1:
        raise ConfigError("need at least one trial")
    trials = []
    for t in range(n_trials):
        try:
            metrics, _, _ = run_single_trial(
                samples, model_config, hyper, protocol, base_seed + t, class_names
            )
        except TrainingDiverged as exc:
            raise TrainingDiverged(exc.epoch, f"trial {t}: {exc}") from exc
        trials.append(metrics)
    accuracy = np.array([m.accuracy for m in trials])
    macro = np.array([m.macro_f1 for m in trials])
    return TrialReport(
        trials=trials,
        mean_accuracy=float(accuracy.mean()),
        std_accuracy=float(accuracy.std()),
        mean_macro_f1=float(macro.mean()),
        std_macro_f1=float(macro.std()),
        mean_confusion=np.mean([m.confusion for m in trials], axis=0),
        mean_train_time_s=float(np.mean([m.train_time_s for m in trials])),
    )
