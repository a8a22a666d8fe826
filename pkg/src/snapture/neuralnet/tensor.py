"""Dense-tensor reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray plus an optional backward closure and parent
links. Ops record the graph only while gradients are enabled (see
``no_grad``) and at least one operand requires gradients. ``backward`` on a
scalar walks the graph once in reverse topological order, accumulates
``.grad`` on every reachable tensor that requires it, then releases the
graph; a second call raises GraphStateError.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable

import numpy as np

from ..errors import GraphStateError, ShapeError

__all__ = [
    "Tensor",
    "no_grad",
    "grad_enabled",
    "parameter",
    "add",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "concat",
    "narrow",
    "reshape",
    "gather_steps",
]

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording (eval-mode forward passes)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_spent")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn
        self._spent = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def backward(self):
        """Reverse-mode pass from a scalar root; single-shot per graph."""
        if self.data.size != 1:
            raise GraphStateError("backward requires a scalar root")
        if self._spent:
            raise GraphStateError("graph already consumed by a previous backward")
        if self._backward_fn is None and not self._parents:
            raise GraphStateError("backward invoked without a forward graph")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
            node._spent = True
            if node is not self:
                node._backward_fn = None
                node._parents = ()

    # Operator sugar used by layer code.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _make(
    data: np.ndarray,
    parents: Iterable[Tensor],
    backward_fn: Callable[[np.ndarray], None],
) -> Tensor:
    parents = tuple(parents)
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out_data = a.data + b.data

    def backward_fn(grad):
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(grad, b.data.shape))

    return _make(out_data, (a, b), backward_fn)


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out_data = a.data * b.data

    def backward_fn(grad):
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(grad * a.data, b.data.shape))

    return _make(out_data, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def backward_fn(grad):
        if a.requires_grad:
            a.accumulate(grad @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ grad)

    return _make(out_data, (a, b), backward_fn)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate(grad * (1.0 - out_data * out_data))

    return _make(out_data, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    half = x.dtype.type(0.5)
    out_data = half * np.tanh(half * x.data) + half  # stable logistic

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate(grad * out_data * (1.0 - out_data))

    return _make(out_data, (x,), backward_fn)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    extents = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def backward_fn(grad):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * grad.ndim
                index[axis] = slice(start, stop)
                t.accumulate(grad[tuple(index)])

    return _make(out_data, tensors, backward_fn)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out_data = x.data[index]

    def backward_fn(grad):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[index] = grad
            x.accumulate(full)

    return _make(out_data, (x,), backward_fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out_data = x.data.reshape(shape)

    def backward_fn(grad):
        if x.requires_grad:
            x.accumulate(grad.reshape(x.data.shape))

    return _make(out_data, (x,), backward_fn)


def gather_steps(steps: list[Tensor], step_index: np.ndarray) -> Tensor:
    """Per-row gather across a list of equally shaped [N, H] step tensors.

    Row n of the output is row n of ``steps[step_index[n]]`` — used to read
    each sequence's last valid LSTM state out of a padded batch.
    """
    n = steps[0].data.shape[0]
    if step_index.shape != (n,):
        raise ShapeError("step_index must have one entry per batch row")
    out_data = np.empty_like(steps[0].data)
    rows = np.arange(n)
    for t, step in enumerate(steps):
        pick = step_index == t
        out_data[pick] = step.data[pick]

    def backward_fn(grad):
        for t, step in enumerate(steps):
            if step.requires_grad:
                masked = np.zeros_like(step.data)
                pick = step_index == t
                masked[pick] = grad[pick]
                step.accumulate(masked)

    return _make(out_data, steps, backward_fn)
