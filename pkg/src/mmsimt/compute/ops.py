"""Differentiable operations.

Broadcasting is deliberately narrow: operands of a binary op either have
the same shape, or the second operand is a vector matching the last axis of
the first ("vector over rows"). Anything else is a :class:`DimensionError`.

Attention, layer norm, the GRU cell and cross-entropy are fused into single
graph nodes with hand-written adjoints; each is covered by finite-difference
checks in the test suite.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DimensionError, NumericError, UsageError
from .tensor import as_tensor, make_result

LAYER_NORM_EPS = 1e-5


def _sum_to_vector(g, n):
    return g.reshape(-1, n).sum(axis=0)


def _binary_layout(a, b, opname):
    if a.shape == b.shape:
        return "same"
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return "rows"
    raise DimensionError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1 and b.ndim > 1:
        a, b = b, a
    layout = _binary_layout(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g if layout == "same" else _sum_to_vector(g, b.shape[0]))

    return make_result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    layout = _binary_layout(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g if layout == "same" else -_sum_to_vector(g, b.shape[0]))

    return make_result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1 and b.ndim > 1:
        a, b = b, a
    layout = _binary_layout(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            gb = g * a.data
            b._accumulate(gb if layout == "same" else _sum_to_vector(gb, b.shape[0]))

    return make_result(a.data * b.data, (a, b), backward)


def scale(a, c):
    """Multiply by a non-differentiable Python scalar."""
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return make_result(a.data * a.data.dtype.type(c), (a,), backward)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - y * y))

    return make_result(y, (a,), backward)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = as_tensor(a)
    y = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return make_result(y, (a,), backward)


_POINTWISE = {"add": add, "mul": mul, "sub": sub, "tanh": tanh, "sigmoid": sigmoid}


def pointwise(op, a, b=None):
    """Dispatch an elementwise op by name (``add``, ``sub``, ``mul``, ``tanh``, ``sigmoid``)."""
    try:
        fn = _POINTWISE[op]
    except KeyError:
        raise UsageError(f"unknown pointwise op {op!r}") from None
    if op in ("tanh", "sigmoid"):
        if b is not None:
            raise UsageError(f"{op} is unary")
        return fn(a)
    if b is None:
        raise UsageError(f"{op} needs two operands")
    return fn(a, b)


def matmul(a, b):
    """``a @ b`` for ``b`` 2-d; ``a`` may carry leading batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            b._accumulate(a2.T @ g.reshape(-1, b.shape[1]))

    return make_result(out, (a, b), backward)


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")

    def backward(g):
        a._accumulate(g.T)

    return make_result(a.data.T.copy(), (a,), backward)


def total(a):
    """Sum of every entry (scalar)."""
    a = as_tensor(a)

    def backward(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return make_result(a.data.sum(), (a,), backward)


def stack(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("stack of zero tensors")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return make_result(out, tensors, backward)


def embedding(table, ids):
    """Row lookup ``table[ids]`` with scatter-add adjoint."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        table._accumulate(full)

    return make_result(out, (table,), backward)


def _softmax_np(x, axis=-1):
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax received non-finite input")
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    x = as_tensor(x)
    y = _softmax_np(x.data, axis)

    def backward(g):
        x._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return make_result(y, (x,), backward)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NumericError("log_softmax received non-finite input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def backward(g):
        x._accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return make_result(y, (x,), backward)


def cross_entropy(logits, targets, mask=None):
    """Summed negative log-likelihood of ``targets`` under ``softmax(logits)``.

    ``logits`` is (N, V); ``mask`` weights each row (0 drops a padded row
    out of both the value and the gradient).
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != logits.shape[:1]:
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    x = logits.data
    if not np.all(np.isfinite(x)):
        raise NumericError("cross_entropy received non-finite logits")
    w = np.ones(x.shape[0], dtype=x.dtype) if mask is None else np.asarray(mask, dtype=x.dtype)
    z = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(x.shape[0])
    nll = lse - z[rows, targets]
    value = (w * nll).sum()

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, targets] -= 1.0
        logits._accumulate(g * w[:, None] * p)

    return make_result(np.asarray(value, dtype=x.dtype), (logits,), backward)


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Normalise over the last axis, then apply ``gain`` and ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if d < 2:
        raise DimensionError("layer_norm needs at least 2 features; variance is degenerate for d == 1")
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain._accumulate(_sum_to_vector(g * xhat, d))
        if bias.requires_grad:
            bias._accumulate(_sum_to_vector(g, d))
        if x.requires_grad:
            gx = g * gain.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            x._accumulate(gx)

    return make_result(out.astype(x.dtype, copy=False), (x, gain, bias), backward)


def dropout(x, p, training, rng):
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)``; identity at eval."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)

    def backward(g):
        x._accumulate(g * keep)

    return make_result(x.data * keep, (x,), backward)


def gru_cell(x, h, w_x, w_h, b_x, b_h):
    """One GRU step; gate columns are laid out as [reset | update | candidate].

    ``h' = (1 - z) * n + z * h`` with ``n = tanh(Wx_n x + r * (Wh_n h + b))``.
    """
    x, h, w_x, w_h, b_x, b_h = map(as_tensor, (x, h, w_x, w_h, b_x, b_h))
    H = h.shape[-1]
    if w_x.shape != (x.shape[-1], 3 * H) or w_h.shape != (H, 3 * H):
        raise DimensionError(
            f"gru_cell: input {x.shape}, hidden {h.shape}, W_x {w_x.shape}, W_h {w_h.shape}")
    gx = x.data @ w_x.data + b_x.data
    gh = h.data @ w_h.data + b_h.data
    r = _sigmoid(gx[..., :H] + gh[..., :H])
    z = _sigmoid(gx[..., H:2 * H] + gh[..., H:2 * H])
    ghn = gh[..., 2 * H:]
    n = np.tanh(gx[..., 2 * H:] + r * ghn)
    out = (1.0 - z) * n + z * h.data

    def backward(g):
        dz = g * (h.data - n)
        dn = g * (1.0 - z)
        dan = dn * (1.0 - n * n)
        dar = dan * ghn * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dgx = np.concatenate([dar, daz, dan], axis=-1)
        dgh = np.concatenate([dar, daz, dan * r], axis=-1)
        if x.requires_grad:
            x._accumulate(dgx @ w_x.data.T)
        if h.requires_grad:
            h._accumulate(g * z + dgh @ w_h.data.T)
        if w_x.requires_grad:
            w_x._accumulate(x.data.reshape(-1, x.shape[-1]).T @ dgx.reshape(-1, 3 * H))
        if w_h.requires_grad:
            w_h._accumulate(h.data.reshape(-1, H).T @ dgh.reshape(-1, 3 * H))
        if b_x.requires_grad:
            b_x._accumulate(_sum_to_vector(dgx, 3 * H))
        if b_h.requires_grad:
            b_h._accumulate(_sum_to_vector(dgh, 3 * H))

    return make_result(out, (x, h, w_x, w_h, b_x, b_h), backward)


def _valid_lengths(valid_len, batch, S):
    lens = np.broadcast_to(np.asarray(valid_len, dtype=np.int64), (batch,))
    if np.any(lens < 1):
        raise UsageError("attention over an empty prefix (valid_len == 0)")
    if np.any(lens > S):
        raise UsageError(f"valid_len {lens.max()} exceeds the {S} available rows")
    return lens


def additive_attention(H, query, valid_len, w_key, w_query, v):
    """MLP attention ``e_i = v . tanh(W_k h_i + W_q q)`` over the first ``valid_len`` rows.

    ``H`` is (S, d) or (B, S, d), ``query`` is (d_q,) or (B, d_q) and
    ``valid_len`` is an int or one int per batch row. Rows past
    ``valid_len`` get a weight of exactly zero. Returns ``(context,
    weights)``; the weights are a plain array and are not differentiated.
    """
    H, query, w_key, w_query, v = map(as_tensor, (H, query, w_key, w_query, v))
    single = H.ndim == 2
    Hd = H.data[None] if single else H.data
    qd = query.data[None] if single else query.data
    B, S, d = Hd.shape
    if qd.shape[0] != B or w_key.shape[0] != d or w_query.shape[0] != qd.shape[-1]:
        raise DimensionError(
            f"additive_attention: H {H.shape}, query {query.shape}, W_k {w_key.shape}, W_q {w_query.shape}")
    lens = _valid_lengths(valid_len, B, S)
    valid = np.arange(S)[None, :] < lens[:, None]

    u = np.tanh(Hd @ w_key.data + (qd @ w_query.data)[:, None, :])
    e = u @ v.data
    e = np.where(valid, e, -np.inf)
    e = e - e.max(axis=1, keepdims=True)
    w = np.where(valid, np.exp(e), 0.0).astype(Hd.dtype)
    w /= w.sum(axis=1, keepdims=True)
    ctx = np.einsum("bs,bsd->bd", w, Hd)

    def backward(g):
        g = g[None] if single else g
        dw = np.einsum("bsd,bd->bs", Hd, g)
        de = w * (dw - (w * dw).sum(axis=1, keepdims=True))
        da = de[:, :, None] * v.data * (1.0 - u * u)
        if H.requires_grad:
            dH = w[:, :, None] * g[:, None, :] + da @ w_key.data.T
            H._accumulate(dH[0] if single else dH)
        if w_key.requires_grad:
            w_key._accumulate(Hd.reshape(-1, d).T @ da.reshape(-1, da.shape[-1]))
        dqp = da.sum(axis=1)
        if query.requires_grad:
            dq = dqp @ w_query.data.T
            query._accumulate(dq[0] if single else dq)
        if w_query.requires_grad:
            w_query._accumulate(qd.T @ dqp)
        if v.requires_grad:
            v._accumulate(np.einsum("bsa,bs->a", u, de))

    out = make_result(ctx[0] if single else ctx, (H, query, w_key, w_query, v), backward)
    return out, (w[0] if single else w)


def scaled_dot_attention(Q, K, V):
    """``softmax(Q K^T / sqrt(d)) V`` with a row-wise softmax over the keys.

    Shapes are (S, d), (R, d), (R, d_v), optionally with a shared leading
    batch axis.
    """
    Q, K, V = map(as_tensor, (Q, K, V))
    if K.shape[-2] == 0:
        raise UsageError("scaled_dot_attention over zero keys")
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2] or Q.ndim != K.ndim or K.ndim != V.ndim:
        raise DimensionError(f"scaled_dot_attention: Q {Q.shape}, K {K.shape}, V {V.shape}")
    d = Q.shape[-1]
    c = 1.0 / np.sqrt(d)
    KT = np.swapaxes(K.data, -1, -2)
    s = (Q.data @ KT) * c
    P = _softmax_np(s, axis=-1).astype(Q.dtype, copy=False)
    out = P @ V.data

    def backward(g):
        dP = g @ np.swapaxes(V.data, -1, -2)
        ds = P * (dP - (dP * P).sum(axis=-1, keepdims=True)) * c
        if Q.requires_grad:
            Q._accumulate(ds @ K.data)
        if K.requires_grad:
            K._accumulate(np.swapaxes(ds, -1, -2) @ Q.data)
        if V.requires_grad:
            V._accumulate(np.swapaxes(P, -1, -2) @ g)

    return make_result(out, (Q, K, V), backward)
