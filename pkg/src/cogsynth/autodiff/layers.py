"""Parameterized building blocks.

A layer registers its parameters in a :class:`ParamStore` when constructed
and is called with the tape-bound parameter dict plus its input, so the same
layer object serves every forward pass.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import ops as F
from .params import ParamStore


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, bias: bool = True, init="xavier"):
        self.n_in, self.n_out = n_in, n_out
        self.w = store.add(f"{name}.w", (n_in, n_out), init)
        self.b = store.add(f"{name}.b", (n_out,), "zeros") if bias else None

    def __call__(self, p, x):
        return F.linear(x, p[self.w], p[self.b] if self.b else None)


class Conv1d:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int, kernel: int = 3, dilation: int = 1,
                 init="xavier", padding: str = "zeros"):
        self.dilation, self.padding = dilation, padding
        self.w = store.add(f"{name}.w", (kernel, c_in, c_out), init)
        self.b = store.add(f"{name}.b", (c_out,), "zeros")

    def __call__(self, p, x):
        return F.conv1d(x, p[self.w], p[self.b], self.dilation, self.padding)


class TCN:
    """Stack of same-padded temporal convolutions with ReLU between layers.

    ``widths`` lists channel counts including input and output, so
    ``TCN(s, "x", [16, 64, 64, 8])`` has three conv layers.
    """

    def __init__(self, store: ParamStore, name: str, widths: Sequence[int], kernel: int = 3, final_activation: bool = False,
                 padding: str = "zeros"):
        self.layers = [
            Conv1d(store, f"{name}.conv{i}", a, b, kernel, padding=padding)
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]
        self.final_activation = final_activation

    def __call__(self, p, x):
        last = len(self.layers) - 1
        for i, conv in enumerate(self.layers):
            x = conv(p, x)
            if i < last or self.final_activation:
                x = F.relu(x)
        return x


class ResidualTCN:
    """Input projection, residual conv blocks ``h + relu(conv(h))``, output projection.

    With every conv kernel and bias at zero the blocks vanish and the network
    reduces to ``out_proj(in_proj(x))``.
    """

    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: int, n_out: int, n_layers: int = 8, kernel: int = 3,
                 padding: str = "zeros"):
        self.in_proj = Linear(store, f"{name}.in_proj", n_in, hidden)
        dilations = [2 ** (i % 4) for i in range(n_layers)]
        self.blocks = [
            Conv1d(store, f"{name}.block{i}", hidden, hidden, kernel, d, padding=padding) for i, d in enumerate(dilations)
        ]
        self.out_proj = Linear(store, f"{name}.out_proj", hidden, n_out)

    def __call__(self, p, x):
        h = self.in_proj(p, x)
        for conv in self.blocks:
            h = F.add(h, F.relu(conv(p, h)))
        return self.out_proj(p, h)


class MLP:
    def __init__(self, store: ParamStore, name: str, widths: Sequence[int], final_init="xavier"):
        n = len(widths) - 1
        self.layers = [
            Linear(store, f"{name}.fc{i}", a, b, init=final_init if i == n - 1 else "xavier")
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]

    def __call__(self, p, x):
        for i, layer in enumerate(self.layers):
            x = layer(p, x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x


def _lstm_bias(hidden: int):
    def init(rng, shape):
        b = np.zeros(shape)
        b[hidden : 2 * hidden] = 1.0  # forget gate
        return b

    return init


class LSTM:
    """Unidirectional stacked LSTM over ``(..., T, C)`` sequences, zero initial state."""

    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: int, n_layers: int = 2):
        self.hidden = hidden
        self.cells = []
        for i in range(n_layers):
            w = store.add(f"{name}.l{i}.w", ((n_in if i == 0 else hidden) + hidden, 4 * hidden))
            b = store.add(f"{name}.l{i}.b", (4 * hidden,), _lstm_bias(hidden))
            self.cells.append((w, b))

    def __call__(self, p, x):
        tape = x.tape
        lead, steps = x.shape[:-2], x.shape[-2]
        h = x
        for w, b in self.cells:
            state = tape.constant(np.zeros(lead + (2 * self.hidden,)))
            outs = []
            for t in range(steps):
                state = F.lstm_step(F.select_time(h, t), state, p[w], p[b])
                outs.append(F.slice_channels(state, 0, self.hidden))
            h = F.stack_time(outs)
        return h
