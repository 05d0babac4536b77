from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore
from .tape import Tape, Tensor

Builder = Callable[[Tape, dict[str, Tensor]], Tensor]


def _loss_value(builder: Builder, params: ParamStore) -> float:
    tape = Tape()
    loss = builder(tape, tape.bind(params))
    val = float(loss.data.reshape(-1)[0])
    if not np.isfinite(val):
        raise FloatingPointError(f"grad_check: non-finite loss {val}")
    return val


def analytic_grads(builder: Builder, params: ParamStore) -> dict[str, np.ndarray]:
    tape = Tape()
    loss = builder(tape, tape.bind(params))
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError("grad_check: non-finite loss")
    return tape.backward(loss)


def grad_check(
    builder: Builder,
    params: ParamStore,
    eps: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max over parameters of ``|analytic - central| / max(1, |central|)``.

    ``builder(tape, bound_params)`` must return a scalar loss tensor and be
    deterministic. ``max_entries`` caps how many entries per parameter are
    probed (chosen with ``rng``); None probes every entry.
    """
    grads = analytic_grads(builder, params)
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for name in params:
        value = params[name]
        flat_idx = np.arange(value.size)
        if max_entries is not None and value.size > max_entries:
            flat_idx = rng.choice(value.size, size=max_entries, replace=False)
        g = grads[name].reshape(-1)
        for k in flat_idx:
            orig = value.reshape(-1)[k]
            bumped = value.copy().reshape(-1)
            bumped[k] = orig + eps
            params[name] = bumped.reshape(value.shape)
            up = _loss_value(builder, params)
            bumped[k] = orig - eps
            params[name] = bumped.reshape(value.shape)
            down = _loss_value(builder, params)
            params[name] = value
            numeric = (up - down) / (2.0 * eps)
            worst = max(worst, abs(g[k] - numeric) / max(1.0, abs(numeric)))
    return worst


def kink_margin(builder: Builder, params: ParamStore) -> float:
    """Distance from the current point to the nearest non-differentiable point.

    Looks at relu inputs, l1 residuals and the gap between the two largest
    entries under max_pool_time. Central differences straddling such a kink
    are meaningless, so a check is only informative when this exceeds eps.
    """
    tape = Tape()
    builder(tape, tape.bind(params))
    margin = np.inf
    for node in tape.nodes:
        if node.kind == "relu":
            margin = min(margin, float(np.min(np.abs(tape.nodes[node.inputs[0]].out))))
        elif node.kind == "l1":
            margin = min(margin, float(np.min(np.abs(node.ctx))))
        elif node.kind == "max_pool_time":
            x = tape.nodes[node.inputs[0]].out
            if x.shape[-2] > 1:
                top = np.sort(x, axis=-2)
                margin = min(margin, float(np.min(top[..., -1, :] - top[..., -2, :])))
    return margin
