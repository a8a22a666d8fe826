"""Network building blocks: convolution, pooling, batch norm, dropout,
linear layers, softmax cross-entropy, and weight initialization.

Convolution is cross-correlation via im2col + one GEMM. All ops run in the
dtype of their inputs (float32 in training, float64 in gradient-check
harnesses); reductions accumulate in float64.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateBatch, LabelOutOfRange, ShapeError
from .tensor import Tensor, _make, grad_enabled, parameter

__all__ = [
    "xavier_uniform_init",
    "conv2d",
    "maxpool2d",
    "PoolSelectionCache",
    "dropout",
    "softmax_xent",
    "Conv2d",
    "BatchNorm2d",
    "Linear",
]


def xavier_uniform_init(
    shape: tuple[int, ...],
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> np.ndarray:
    """Uniform on +/- sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fans must be positive")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _same_padding(kernel: int) -> tuple[int, int]:
    # Asymmetric for even kernels: floor/ceil of (k - 1) / 2.
    return (kernel - 1) // 2, kernel // 2


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # x: [N, C, H, W] (already padded) -> [N * Ho * Wo, C * kh * kw]
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))  # [N,C,Ho,Wo,kh,kw]
    n, c, ho, wo = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols)


def conv2d(
    x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: str = "same"
) -> Tensor:
    """Cross-correlation of [N,C,H,W] with [O,C,kh,kw] kernels.

    'same' zero-pads to preserve H x W at stride 1; 'valid' applies no
    padding. Only stride 1 is supported.
    """
    if stride != 1:
        raise ShapeError("conv2d supports stride 1 only")
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weights")
    n, c, h, w = x.data.shape
    out_ch, wc, kh, kw = weight.data.shape
    if wc != c:
        raise ShapeError(f"channel mismatch: input {c}, weights {wc}")

    if padding == "same":
        ph, pw = _same_padding(kh), _same_padding(kw)
    elif padding == "valid":
        ph, pw = (0, 0), (0, 0)
    else:
        raise ValueError(f"unknown padding {padding!r}")
    if h + ph[0] + ph[1] < kh or w + pw[0] + pw[1] < kw:
        raise ShapeError("input smaller than kernel")

    xp = np.pad(x.data, ((0, 0), (0, 0), ph, pw)) if padding == "same" else x.data
    ho = xp.shape[2] - kh + 1
    wo = xp.shape[3] - kw + 1
    cols = _im2col(xp, kh, kw)
    w_mat = weight.data.reshape(out_ch, -1)
    out = cols @ w_mat.T
    out += bias.data
    out_data = out.reshape(n, ho, wo, out_ch).transpose(0, 3, 1, 2)
    out_data = np.ascontiguousarray(out_data)

    def backward_fn(grad):
        gmat = grad.transpose(0, 2, 3, 1).reshape(-1, out_ch)
        if weight.requires_grad:
            weight.accumulate((gmat.T @ cols).reshape(weight.data.shape))
        if bias.requires_grad:
            bias.accumulate(gmat.sum(axis=0, dtype=np.float64).astype(bias.dtype))
        if x.requires_grad:
            dcols = (gmat @ w_mat).reshape(n, ho, wo, c, kh, kw)
            dxp = np.zeros_like(xp)
            for ki in range(kh):
                for kj in range(kw):
                    dxp[:, :, ki : ki + ho, kj : kj + wo] += dcols[
                        :, :, :, :, ki, kj
                    ].transpose(0, 3, 1, 2)
            if padding == "same":
                dxp = dxp[:, :, ph[0] : ph[0] + h, pw[0] : pw[0] + w]
            x.accumulate(dxp)

    return _make(out_data, (x, weight, bias), backward_fn)


class PoolSelectionCache:
    """Record max-pool argmax selections on the first pass, replay them on
    later passes.

    Finite-difference gradient checks need this: a perturbation that flips a
    window's argmax steps across the selection kink, and the difference
    quotient no longer measures the branch gradient the backward pass
    computes. Runs inside the context record on first use and replay after.
    """

    def __init__(self):
        self.selections: list[np.ndarray] = []
        self._sealed = False
        self._cursor = 0

    def __enter__(self):
        global _ACTIVE_POOL_CACHE
        self._cursor = 0
        _ACTIVE_POOL_CACHE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_POOL_CACHE
        _ACTIVE_POOL_CACHE = None
        self._sealed = True
        return False

    def pick(self, flat: np.ndarray) -> np.ndarray:
        if self._sealed:
            arg = self.selections[self._cursor]
            self._cursor += 1
            return arg
        arg = flat.argmax(axis=-1)
        self.selections.append(arg)
        return arg


_ACTIVE_POOL_CACHE: PoolSelectionCache | None = None


def maxpool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """Per-window maximum; trailing rows/columns that do not fill a window
    are dropped. Ties route gradient to the first maximum in scan order."""
    if window != 2 or stride != 2:
        raise ShapeError("maxpool2d supports 2x2 windows at stride 2")
    n, c, h, w = x.data.shape
    if h < 2 or w < 2:
        raise ShapeError(f"input {h}x{w} smaller than pooling window")
    ho, wo = h // 2, w // 2
    cropped = x.data[:, :, : ho * 2, : wo * 2]
    windows = cropped.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = windows.reshape(n, c, ho, wo, 4)
    if _ACTIVE_POOL_CACHE is not None:
        arg = _ACTIVE_POOL_CACHE.pick(flat)
    else:
        arg = flat.argmax(axis=-1)
    out_data = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    out_data = np.ascontiguousarray(out_data)

    def backward_fn(grad):
        if not x.requires_grad:
            return
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, arg[..., None], grad[..., None], axis=-1)
        dx = np.zeros_like(x.data)
        dx[:, :, : ho * 2, : wo * 2] = (
            dflat.reshape(n, c, ho, wo, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, ho * 2, wo * 2)
        )
        x.accumulate(dx)

    return _make(out_data, (x,), backward_fn)


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator) -> Tensor:
    """Zero activations with probability ``rate`` in train mode, rescaling
    survivors by 1/(1-rate); identity in eval mode."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must lie in [0, 1)")
    if mode == "eval" or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    out_data = x.data * keep * scale

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate(grad * keep * scale)

    return _make(out_data, (x,), backward_fn)


def softmax_xent(logits: Tensor, targets: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy over the batch plus the probability matrix.

    The loss is a scalar tensor (float64); its backward distributes
    (p - onehot)/N into the logits.
    """
    if logits.data.ndim != 2:
        raise ShapeError("logits must be [N, K]")
    n, k = logits.data.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise ShapeError("one target per batch row required")
    if targets.min() < 0 or targets.max() >= k:
        raise LabelOutOfRange(f"targets must lie in [0, {k})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=1, keepdims=True)
    picked = probs[np.arange(n), targets]
    loss_value = -np.log(picked.astype(np.float64)).mean()

    def backward_fn(grad):
        if logits.requires_grad:
            dlogits = probs.astype(np.float64)
            dlogits[np.arange(n), targets] -= 1.0
            dlogits *= grad / n
            logits.accumulate(dlogits.astype(logits.dtype))

    loss = _make(np.float64(loss_value), (logits,), backward_fn)
    return loss, probs


class Conv2d:
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        dtype=np.float32,
        padding: str = "same",
    ):
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        self.weight = parameter(
            xavier_uniform_init(
                (out_channels, in_channels, kernel, kernel), fan_in, fan_out, rng, dtype
            )
        )
        self.bias = parameter(np.zeros(out_channels, dtype=dtype))
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, padding=self.padding)

    def params(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight), ("bias", self.bias)]


class Linear:
    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.weight = parameter(
            xavier_uniform_init((out_features, in_features), in_features, out_features, rng, dtype)
        )
        self.bias = parameter(np.zeros(out_features, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        from .tensor import add, matmul

        return add(matmul(x, _transposed(self.weight)), self.bias)

    def params(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight), ("bias", self.bias)]


def _transposed(weight: Tensor) -> Tensor:
    out_data = weight.data.T

    def backward_fn(grad):
        if weight.requires_grad:
            weight.accumulate(grad.T)

    return _make(out_data, (weight,), backward_fn)


class BatchNorm2d:
    """Per-channel batch normalization over [N, C, H, W].

    Train mode normalizes by population batch statistics and updates the
    running estimates in place with the configured momentum; eval mode
    normalizes by the running estimates. Scale/shift are learned.
    """

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5):
        self.scale = parameter(np.ones(channels, dtype=dtype))
        self.shift = parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        if x.data.ndim != 4:
            raise ShapeError("BatchNorm2d expects [N, C, H, W]")
        dtype = x.dtype
        eps = dtype.type(self.eps)
        if mode == "train":
            if x.data.shape[0] < 2:
                raise DegenerateBatch("train-mode batch normalization needs >= 2 samples")
            mean = x.data.mean(axis=(0, 2, 3), dtype=np.float64).astype(dtype)
            centered = x.data - mean[None, :, None, None]
            var = (centered * centered).mean(axis=(0, 2, 3), dtype=np.float64).astype(dtype)
            self.running_mean = (
                (1 - self.momentum) * self.running_mean + self.momentum * mean
            ).astype(dtype)
            self.running_var = (
                (1 - self.momentum) * self.running_var + self.momentum * var
            ).astype(dtype)
        elif mode == "eval":
            mean = self.running_mean.astype(dtype)
            var = self.running_var.astype(dtype)
            centered = x.data - mean[None, :, None, None]
        else:
            raise ValueError(f"unknown mode {mode!r}")

        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std[None, :, None, None]
        out_data = xhat * self.scale.data[None, :, None, None] + self.shift.data[
            None, :, None, None
        ]

        scale, shift = self.scale, self.shift
        m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]

        def backward_fn(grad):
            axes = (0, 2, 3)
            if scale.requires_grad:
                scale.accumulate((grad * xhat).sum(axis=axes, dtype=np.float64).astype(dtype))
            if shift.requires_grad:
                shift.accumulate(grad.sum(axis=axes, dtype=np.float64).astype(dtype))
            if not x.requires_grad:
                return
            dxhat = grad * scale.data[None, :, None, None]
            if mode == "eval":
                x.accumulate(dxhat * inv_std[None, :, None, None])
                return
            # Gradient through the batch statistics themselves.
            sum_dxhat = dxhat.sum(axis=axes)
            sum_dxhat_xhat = (dxhat * xhat).sum(axis=axes)
            dx = (
                dxhat
                - (sum_dxhat / m)[None, :, None, None]
                - xhat * (sum_dxhat_xhat / m)[None, :, None, None]
            ) * inv_std[None, :, None, None]
            x.accumulate(dx.astype(dtype))

        return _make(out_data, (x, self.scale, self.shift), backward_fn)

    def params(self) -> list[tuple[str, Tensor]]:
        return [("scale", self.scale), ("shift", self.shift)]

    def state(self) -> list[tuple[str, np.ndarray]]:
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def load_state(self, running_mean: np.ndarray, running_var: np.ndarray):
        self.running_mean = running_mean.copy()
        self.running_var = running_var.copy()
