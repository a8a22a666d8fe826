"""Stateless stacked LSTM built from the primitive autodiff ops.

Hidden and cell states start at zero for every sequence. Gate layout in the
packed weight matrices is (input, forget, candidate, output); input/forget/
output gates are sigmoid, the candidate is tanh.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .ops import xavier_uniform_init
from .tensor import Tensor, add, matmul, mul, narrow, parameter, sigmoid, tanh
from .ops import _transposed

__all__ = ["LstmLayer", "StackedLstm"]


class LstmLayer:
    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float32):
        h = hidden_size
        self.hidden_size = h
        self.w_input = parameter(
            xavier_uniform_init((4 * h, input_size), input_size, h, rng, dtype)
        )
        self.w_hidden = parameter(xavier_uniform_init((4 * h, h), h, h, rng, dtype))
        self.bias = parameter(np.zeros(4 * h, dtype=dtype))

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        gates = add(
            add(matmul(x, _transposed(self.w_input)), matmul(h, _transposed(self.w_hidden))),
            self.bias,
        )
        hs = self.hidden_size
        gate_in = sigmoid(narrow(gates, 1, 0, hs))
        gate_forget = sigmoid(narrow(gates, 1, hs, hs))
        candidate = tanh(narrow(gates, 1, 2 * hs, hs))
        gate_out = sigmoid(narrow(gates, 1, 3 * hs, hs))
        c_next = add(mul(gate_forget, c), mul(gate_in, candidate))
        h_next = mul(gate_out, tanh(c_next))
        return h_next, c_next

    def params(self) -> list[tuple[str, Tensor]]:
        return [("w_input", self.w_input), ("w_hidden", self.w_hidden), ("bias", self.bias)]


class StackedLstm:
    def __init__(
        self,
        input_size: int,
        hidden_size: int,
        layers: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        if layers < 1:
            raise ShapeError("LSTM needs at least one layer")
        self.dtype = dtype
        self.hidden_size = hidden_size
        self.layers = [
            LstmLayer(input_size if i == 0 else hidden_size, hidden_size, rng, dtype)
            for i in range(layers)
        ]

    def __call__(self, steps: list[Tensor]) -> list[Tensor]:
        """Run the recurrence over per-step [N, D] inputs; returns the
        top layer's hidden state at every step."""
        if not steps:
            raise ShapeError("LSTM needs at least one time step")
        n = steps[0].data.shape[0]
        zeros = np.zeros((n, self.hidden_size), dtype=self.dtype)
        states = [(Tensor(zeros), Tensor(zeros)) for _ in self.layers]
        top: list[Tensor] = []
        for x in steps:
            carry = x
            for i, layer in enumerate(self.layers):
                h, c = layer.step(carry, *states[i])
                states[i] = (h, c)
                carry = h
            top.append(carry)
        return top

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"layer{i}.{name}", t) for name, t in layer.params())
        return out
