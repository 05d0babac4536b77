"""Op kernels and their functional wrappers.

Sequence tensors are laid out ``(..., T, C)``: time on the second-to-last
axis, channels last. A leading batch axis is optional everywhere.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tape import OpError, Tensor, register_op


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(kind: str, a: np.ndarray, b: np.ndarray) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise OpError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise


def _identity_fwd(attrs, x):
    return x.copy(), None


def _identity_bwd(ctx, g):
    return (g,)


def _sigmoid_fwd(attrs, x):
    e = np.exp(-np.abs(x))  # never overflows
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return y, y


def _sigmoid_bwd(y, g):
    return (g * y * (1.0 - y),)


def _tanh_fwd(attrs, x):
    y = np.tanh(x)
    return y, y


def _tanh_bwd(y, g):
    return (g * (1.0 - y * y),)


def _relu_fwd(attrs, x):
    mask = x > 0
    return x * mask, mask


def _relu_bwd(mask, g):
    return (g * mask,)


def _mul_fwd(attrs, a, b):
    _check_broadcast("elementwise_mul", a, b)
    return a * b, (a, b)


def _mul_bwd(ctx, g):
    a, b = ctx
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _add_fwd(attrs, a, b):
    _check_broadcast("elementwise_add", a, b)
    return a + b, (a.shape, b.shape)


def _add_bwd(ctx, g):
    sa, sb = ctx
    return _unbroadcast(g, sa), _unbroadcast(g, sb)


def _wsum_fwd(attrs, *xs):
    weights = attrs["weights"]
    if len(weights) != len(xs) or not xs:
        raise OpError(f"scalar_weighted_sum: {len(xs)} inputs but {len(weights)} weights")
    shape = xs[0].shape
    for x in xs[1:]:
        if x.shape != shape:
            raise OpError(f"scalar_weighted_sum: shape {x.shape} differs from {shape}")
    out = np.zeros(shape, dtype=xs[0].dtype)
    for w, x in zip(weights, xs):
        out = out + float(w) * x
    return out, tuple(float(w) for w in weights)


def _wsum_bwd(weights, g):
    return tuple(w * g for w in weights)


register_op("identity", _identity_fwd, _identity_bwd)
register_op("sigmoid", _sigmoid_fwd, _sigmoid_bwd)
register_op("tanh", _tanh_fwd, _tanh_bwd)
register_op("relu", _relu_fwd, _relu_bwd)
register_op("elementwise_mul", _mul_fwd, _mul_bwd)
register_op("elementwise_add", _add_fwd, _add_bwd)
register_op("scalar_weighted_sum", _wsum_fwd, _wsum_bwd)


# ------------------------------------------------------------------- layers


def _linear_fwd(attrs, x, w, b=None):
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise OpError(f"linear: input last dim {x.shape[-1]} does not match weight {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise OpError(f"linear: bias shape {b.shape} should be ({w.shape[1]},)")
    y = x @ w
    if b is not None:
        y = y + b
    return y, (x, w, b is not None)


def _linear_bwd(ctx, g):
    x, w, has_b = ctx
    gx = g @ w.T
    gw = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    if has_b:
        return gx, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)
    return gx, gw


def _conv_fwd(attrs, x, w, b=None):
    dilation = int(attrs.get("dilation", 1))
    padding = attrs.get("padding", "zeros")
    if padding not in ("zeros", "edge"):
        raise OpError(f"temporal_conv1d: padding must be 'zeros' or 'edge', got {padding!r}")
    if x.ndim not in (2, 3):
        raise OpError(f"temporal_conv1d: input must be (T,C) or (B,T,C), got {x.shape}")
    if w.ndim != 3:
        raise OpError(f"temporal_conv1d: kernel must be (K,C_in,C_out), got {w.shape}")
    k, cin, cout = w.shape
    if k % 2 == 0:
        raise OpError(f"temporal_conv1d: kernel size {k} must be odd for same padding")
    if x.shape[-1] != cin:
        raise OpError(f"temporal_conv1d: input channels {x.shape[-1]} != kernel C_in {cin}")
    if b is not None and b.shape != (cout,):
        raise OpError(f"temporal_conv1d: bias shape {b.shape} should be ({cout},)")
    squeeze = x.ndim == 2
    x3 = x[None] if squeeze else x
    bsz, t, _ = x3.shape
    pad = dilation * (k - 1) // 2
    xp = np.pad(x3, ((0, 0), (pad, pad), (0, 0)), mode="constant" if padding == "zeros" else "edge")
    cols = np.stack([xp[:, i * dilation : i * dilation + t, :] for i in range(k)], axis=2)
    cols = cols.reshape(bsz, t, k * cin)
    y = cols @ w.reshape(k * cin, cout)
    if b is not None:
        y = y + b
    ctx = (cols, w, b is not None, dilation, pad, squeeze, x3.shape, padding)
    return (y[0] if squeeze else y), ctx


def _conv_bwd(ctx, g):
    cols, w, has_b, dilation, pad, squeeze, xshape, padding = ctx
    k, cin, cout = w.shape
    bsz, t, _ = xshape
    g3 = g[None] if squeeze else g
    g2 = g3.reshape(-1, cout)
    gw = (cols.reshape(-1, k * cin).T @ g2).reshape(k, cin, cout)
    gcols = (g3 @ w.reshape(k * cin, cout).T).reshape(bsz, t, k, cin)
    gxp = np.zeros((bsz, t + 2 * pad, cin), dtype=g.dtype)
    for i in range(k):
        gxp[:, i * dilation : i * dilation + t, :] += gcols[:, :, i, :]
    gx = gxp[:, pad : pad + t, :]
    if padding == "edge" and pad:
        gx = gx.copy()
        gx[:, 0] += gxp[:, :pad].sum(axis=1)
        gx[:, -1] += gxp[:, pad + t :].sum(axis=1)
    if squeeze:
        gx = gx[0]
    if has_b:
        return gx, gw, g2.sum(axis=0)
    return gx, gw


def _lstm_fwd(attrs, x, state, w, b):
    """One LSTM cell step on a packed ``[h : c]`` state; gate order i, f, g, o."""
    if state.shape[-1] % 2:
        raise OpError(f"lstm_step: packed state width {state.shape[-1]} must be even")
    hdim = state.shape[-1] // 2
    if x.shape[:-1] != state.shape[:-1]:
        raise OpError(f"lstm_step: input batch dims {x.shape[:-1]} != state batch dims {state.shape[:-1]}")
    if w.shape != (x.shape[-1] + hdim, 4 * hdim):
        raise OpError(
            f"lstm_step: weight {w.shape} should be ({x.shape[-1] + hdim}, {4 * hdim}) "
            f"for input {x.shape[-1]} and hidden {hdim}"
        )
    if b.shape != (4 * hdim,):
        raise OpError(f"lstm_step: bias {b.shape} should be ({4 * hdim},)")
    h, c = state[..., :hdim], state[..., hdim:]
    xh = np.concatenate([x, h], axis=-1)
    z = xh @ w + b
    i = _sigmoid_fwd(None, z[..., :hdim])[0]
    f = _sigmoid_fwd(None, z[..., hdim : 2 * hdim])[0]
    gg = np.tanh(z[..., 2 * hdim : 3 * hdim])
    o = _sigmoid_fwd(None, z[..., 3 * hdim :])[0]
    c_new = f * c + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc
    ctx = (xh, w, c, i, f, gg, o, tc, x.shape[-1])
    return np.concatenate([h_new, c_new], axis=-1), ctx


def _lstm_bwd(ctx, g):
    xh, w, c, i, f, gg, o, tc, xdim = ctx
    hdim = c.shape[-1]
    gh, gc = g[..., :hdim], g[..., hdim:]
    gc = gc + gh * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            gc * gg * i * (1.0 - i),
            gc * c * f * (1.0 - f),
            gc * i * (1.0 - gg * gg),
            gh * tc * o * (1.0 - o),
        ],
        axis=-1,
    )
    gxh = dz @ w.T
    gw = xh.reshape(-1, xh.shape[-1]).T @ dz.reshape(-1, dz.shape[-1])
    gb = dz.reshape(-1, dz.shape[-1]).sum(axis=0)
    gstate = np.concatenate([gxh[..., xdim:], gc * f], axis=-1)
    return gxh[..., :xdim], gstate, gw, gb


def _embed_fwd(attrs, table):
    idx = np.asarray(attrs["indices"])
    if not np.issubdtype(idx.dtype, np.integer):
        raise OpError(f"embed_lookup: indices must be integers, got {idx.dtype}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise OpError(f"embed_lookup: index out of range [0, {table.shape[0]}): {idx.min()}..{idx.max()}")
    return table[idx], (idx, table.shape)


def _embed_bwd(ctx, g):
    idx, shape = ctx
    gt = np.zeros(shape, dtype=g.dtype)
    np.add.at(gt, idx, g)
    return (gt,)


register_op("linear", _linear_fwd, _linear_bwd)
register_op("temporal_conv1d", _conv_fwd, _conv_bwd)
register_op("lstm_step", _lstm_fwd, _lstm_bwd)
register_op("embed_lookup", _embed_fwd, _embed_bwd)


# ------------------------------------------------------------ normalization


def _softmax_fwd(attrs, x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)
    return y, y


def _softmax_bwd(y, g):
    return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)


def _lnorm_fwd(attrs, x):
    eps = float(attrs.get("eps", 1e-5))
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * rstd
    return xhat, (xhat, rstd)


def _lnorm_bwd(ctx, g):
    xhat, rstd = ctx
    gm = g.mean(axis=-1, keepdims=True)
    gxm = (g * xhat).mean(axis=-1, keepdims=True)
    return (rstd * (g - gm - xhat * gxm),)


register_op("softmax", _softmax_fwd, _softmax_bwd)
register_op("layer_stats_normalize", _lnorm_fwd, _lnorm_bwd)


# ------------------------------------------------------------ time pooling


def _need_time(kind, x):
    if x.ndim < 2:
        raise OpError(f"{kind}: expected (..., T, C), got {x.shape}")


def _avgpool_fwd(attrs, x):
    _need_time("avg_pool_time", x)
    return x.mean(axis=-2, keepdims=True), x.shape


def _avgpool_bwd(shape, g):
    return (np.broadcast_to(g / shape[-2], shape).copy(),)


def _maxpool_fwd(attrs, x):
    _need_time("max_pool_time", x)
    arg = x.argmax(axis=-2)
    out = np.take_along_axis(x, arg[..., None, :], axis=-2)
    return out, (arg, x.shape)


def _maxpool_bwd(ctx, g):
    arg, shape = ctx
    gx = np.zeros(shape, dtype=g.dtype)
    np.put_along_axis(gx, arg[..., None, :], g, axis=-2)
    return (gx,)


def _select_fwd(attrs, x):
    _need_time("select_time", x)
    t = int(attrs["index"])
    if not -x.shape[-2] <= t < x.shape[-2]:
        raise OpError(f"select_time: index {t} outside T={x.shape[-2]}")
    return x[..., t, :].copy(), (x.shape, t)


def _select_bwd(ctx, g):
    shape, t = ctx
    gx = np.zeros(shape, dtype=g.dtype)
    gx[..., t, :] = g
    return (gx,)


def _stack_fwd(attrs, *xs):
    if not xs:
        raise OpError("stack_time: no inputs")
    for x in xs[1:]:
        if x.shape != xs[0].shape:
            raise OpError(f"stack_time: frame shape {x.shape} differs from {xs[0].shape}")
    return np.stack(xs, axis=-2), len(xs)


def _stack_bwd(n, g):
    return tuple(g[..., t, :] for t in range(n))


register_op("avg_pool_time", _avgpool_fwd, _avgpool_bwd)
register_op("max_pool_time", _maxpool_fwd, _maxpool_bwd)
register_op("select_time", _select_fwd, _select_bwd)
register_op("stack_time", _stack_fwd, _stack_bwd)


# --------------------------------------------------------------- channels


def _concat_fwd(attrs, *xs):
    if not xs:
        raise OpError("concat_channels: no inputs")
    lead = xs[0].shape[:-1]
    for x in xs[1:]:
        if x.shape[:-1] != lead:
            raise OpError(f"concat_channels: leading dims {x.shape[:-1]} differ from {lead}")
    widths = [x.shape[-1] for x in xs]
    return np.concatenate(xs, axis=-1), widths


def _concat_bwd(widths, g):
    edges = np.cumsum([0] + widths)
    return tuple(g[..., a:b] for a, b in zip(edges[:-1], edges[1:]))


def _slice_fwd(attrs, x):
    start, stop = int(attrs["start"]), int(attrs["stop"])
    if not 0 <= start < stop <= x.shape[-1]:
        raise OpError(f"slice_channels: [{start}, {stop}) invalid for C={x.shape[-1]}")
    return x[..., start:stop].copy(), (x.shape, start, stop)


def _slice_bwd(ctx, g):
    shape, start, stop = ctx
    gx = np.zeros(shape, dtype=g.dtype)
    gx[..., start:stop] = g
    return (gx,)


register_op("concat_channels", _concat_fwd, _concat_bwd)
register_op("slice_channels", _slice_fwd, _slice_bwd)


# ------------------------------------------------------------ similarities


def _cos_fwd(attrs, a, b):
    eps = float(attrs.get("eps", 1e-8))
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-1]:
        raise OpError(f"cosine_similarity: incompatible shapes {a.shape} and {b.shape}")
    na = np.sqrt((a * a).sum(axis=-1, keepdims=True) + eps * eps)
    nb = np.sqrt((b * b).sum(axis=-1, keepdims=True) + eps * eps)
    ah, bh = a / na, b / nb
    return ah @ np.swapaxes(bh, -1, -2), (ah, bh, na, nb)


def _cos_bwd(ctx, g):
    ah, bh, na, nb = ctx
    gah = g @ bh
    gbh = np.swapaxes(g, -1, -2) @ ah
    ga = (gah - ah * (gah * ah).sum(axis=-1, keepdims=True)) / na
    gb = (gbh - bh * (gbh * bh).sum(axis=-1, keepdims=True)) / nb
    return ga, gb


register_op("cosine_similarity", _cos_fwd, _cos_bwd)


# ------------------------------------------------------------------ losses


def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise OpError(f"{kind}: prediction {a.shape} and target {b.shape} differ")


def _mse_fwd(attrs, a, b):
    _same_shape("mse", a, b)
    d = a - b
    return np.asarray(np.mean(d * d)), d


def _mse_bwd(d, g):
    gd = g * 2.0 * d / d.size
    return gd, -gd


def _l1_fwd(attrs, a, b):
    _same_shape("l1", a, b)
    d = a - b
    return np.asarray(np.mean(np.abs(d))), d


def _l1_bwd(d, g):
    gd = g * np.sign(d) / d.size
    return gd, -gd


def _ce_fwd(attrs, logits):
    targets = np.asarray(attrs["targets"])
    if targets.shape != logits.shape[:-1]:
        raise OpError(f"cross_entropy: targets {targets.shape} do not match logits {logits.shape}")
    k = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise OpError(f"cross_entropy: target outside [0, {k})")
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)
    return np.asarray(-picked.mean()), (logp, targets)


def _ce_bwd(ctx, g):
    logp, targets = ctx
    p = np.exp(logp)
    np.put_along_axis(p, targets[..., None], np.take_along_axis(p, targets[..., None], axis=-1) - 1.0, axis=-1)
    return (g * p / targets.size,)


register_op("mse", _mse_fwd, _mse_bwd)
register_op("l1", _l1_fwd, _l1_bwd)
register_op("cross_entropy", _ce_fwd, _ce_bwd)


# ------------------------------------------------------ functional wrappers


def _t(x: Tensor):
    return x.tape


def identity(x):
    return _t(x).apply("identity", [x])


def sigmoid(x):
    return _t(x).apply("sigmoid", [x])


def tanh(x):
    return _t(x).apply("tanh", [x])


def relu(x):
    return _t(x).apply("relu", [x])


def mul(a, b):
    return _t(a).apply("elementwise_mul", [a, b])


def add(a, b):
    return _t(a).apply("elementwise_add", [a, b])


def weighted_sum(xs: Sequence[Tensor], weights: Sequence[float]):
    return _t(xs[0]).apply("scalar_weighted_sum", list(xs), weights=list(weights))


def scale(x, w: float):
    return weighted_sum([x], [w])


def linear(x, w, b=None):
    return _t(x).apply("linear", [x, w] if b is None else [x, w, b])


def conv1d(x, w, b=None, dilation: int = 1, padding: str = "zeros"):
    """Same-length temporal convolution; ``padding`` is ``"zeros"`` or ``"edge"`` (replicate boundary frames)."""
    return _t(x).apply("temporal_conv1d", [x, w] if b is None else [x, w, b], dilation=dilation, padding=padding)


def lstm_step(x, state, w, b):
    return _t(x).apply("lstm_step", [x, state, w, b])


def embed(table, indices):
    return _t(table).apply("embed_lookup", [table], indices=np.asarray(indices))


def softmax(x):
    return _t(x).apply("softmax", [x])


def layer_norm(x, eps: float = 1e-5):
    return _t(x).apply("layer_stats_normalize", [x], eps=eps)


def avg_pool_time(x):
    return _t(x).apply("avg_pool_time", [x])


def max_pool_time(x):
    return _t(x).apply("max_pool_time", [x])


def select_time(x, t: int):
    return _t(x).apply("select_time", [x], index=t)


def stack_time(xs: Sequence[Tensor]):
    return _t(xs[0]).apply("stack_time", list(xs))


def concat(xs: Sequence[Tensor]):
    return _t(xs[0]).apply("concat_channels", list(xs))


def slice_channels(x, start: int, stop: int):
    return _t(x).apply("slice_channels", [x], start=start, stop=stop)


def cosine_similarity(a, b, eps: float = 1e-8):
    return _t(a).apply("cosine_similarity", [a, b], eps=eps)


def mse(a, b):
    return _t(a).apply("mse", [a, b])


def l1(a, b):
    return _t(a).apply("l1", [a, b])


def cross_entropy(logits, targets):
    return _t(logits).apply("cross_entropy", [logits], targets=np.asarray(targets))
