"""Reverse-mode differentiation tape.

Every tensor produced during a forward pass is recorded on exactly one
:class:`Tape`. Nodes are appended in evaluation order, so the list itself is a
topological order and ``backward`` is a single reverse sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np


class OpError(ValueError):
    """Raised for invalid op kinds or incompatible input shapes."""


# kind -> (forward, backward)
#   forward(attrs, *arrays) -> (out, ctx)
#   backward(ctx, grad_out) -> tuple of input grads (None where not needed)
_REGISTRY: dict[str, tuple[Callable, Callable]] = {}


def register_op(kind: str, forward: Callable, backward: Callable) -> None:
    if kind in _REGISTRY:
        raise OpError(f"op kind {kind!r} registered twice")
    _REGISTRY[kind] = (forward, backward)


def op_kinds() -> list[str]:
    return sorted(_REGISTRY)


class Tensor:
    """Dense array recorded on a tape."""

    __slots__ = ("data", "tape", "node_id", "name")

    def __init__(self, data: np.ndarray, tape: "Tape", node_id: int, name: str | None = None):
        self.data = data
        self.tape = tape
        self.node_id = node_id
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, node={self.node_id})"


@dataclass
class _Node:
    kind: str
    inputs: tuple[int, ...]
    ctx: Any = None
    name: str | None = None
    out: Any = None  # forward value, kept for diagnostics such as kink_margin


@dataclass
class Tape:
    """Ordered record of a forward computation."""

    dtype: Any = np.float64
    nodes: list[_Node] = field(default_factory=list)

    def _push(self, data: np.ndarray, node: _Node) -> Tensor:
        node.out = data
        self.nodes.append(node)
        return Tensor(data, self, len(self.nodes) - 1, node.name)

    def constant(self, value) -> Tensor:
        """Leaf that never receives a gradient of interest (data, masks, seeds)."""
        arr = np.asarray(value, dtype=self.dtype)
        return self._push(arr, _Node("leaf", (), ctx=arr))

    def param(self, name: str, value) -> Tensor:
        """Named leaf; its gradient is reported by :meth:`backward`."""
        arr = np.asarray(value, dtype=self.dtype)
        if arr.ndim and min(arr.shape) < 1:
            raise OpError(f"parameter {name!r} has an empty dimension: {arr.shape}")
        return self._push(arr, _Node("leaf", (), ctx=arr, name=name))

    def bind(self, store) -> dict[str, Tensor]:
        """Register every parameter of a store as a named leaf."""
        return {name: self.param(name, value) for name, value in store.items()}

    def apply(self, kind: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
        if kind not in _REGISTRY:
            raise OpError(f"unknown op kind {kind!r}")
        for t in inputs:
            if not isinstance(t, Tensor):
                raise OpError(f"{kind}: inputs must be Tensors, got {type(t).__name__}")
            if t.tape is not self:
                raise OpError(f"{kind}: input {t!r} belongs to a different tape")
        forward, _ = _REGISTRY[kind]
        out, ctx = forward(attrs, *[t.data for t in inputs])
        return self._push(out, _Node(kind, tuple(t.node_id for t in inputs), ctx))

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Gradients of a scalar ``loss`` for every named leaf on this tape.

        Named leaves the loss does not depend on get an all-zero gradient.
        """
        if loss.tape is not self:
            raise OpError("backward: loss belongs to a different tape")
        if loss.data.size != 1:
            raise OpError(f"backward: loss must be scalar, got shape {loss.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[loss.node_id] = np.ones_like(loss.data)
        for i in range(loss.node_id, -1, -1):
            g = grads[i]
            node = self.nodes[i]
            if g is None or node.kind == "leaf":
                continue
            _, backward = _REGISTRY[node.kind]
            in_grads = backward(node.ctx, g)
            for j, gj in zip(node.inputs, in_grads):
                if gj is None:
                    continue
                if grads[j] is None:
                    grads[j] = gj
                else:
                    grads[j] = grads[j] + gj
        out = {}
        for i, node in enumerate(self.nodes):
            if node.name is None:
                continue
            g = grads[i]
            out[node.name] = np.zeros_like(node.ctx) if g is None else g
        return out
