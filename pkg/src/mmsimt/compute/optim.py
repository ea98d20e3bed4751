"""ADAM and global-norm gradient clipping over dicts of named arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NumericError


def clip_global_norm(grads, max_norm=1.0):
    """Rescale all gradients jointly so their combined L2 norm is at most ``max_norm``.

    ``grads`` maps names to arrays. Returns ``(clipped, norm_before)``; the
    input arrays are not modified.
    """
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if norm > max_norm:
        factor = max_norm / norm
        return {k: g * g.dtype.type(factor) for k, g in grads.items()}, norm
    return dict(grads), norm


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    """One bias-corrected ADAM update, in place on the ``params`` arrays.

    Weight decay is classical L2: ``weight_decay * param`` is added to the
    gradient before the moment estimates are updated.
    """
    b1, b2 = betas
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise DimensionError(f"gradient for {name!r} has shape {g.shape}, parameter {params[name].shape}")
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        if weight_decay:
            g = g + weight_decay * p
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)
    return params, state


class Adam:
    """Stateful wrapper around :func:`adam_step` for a dict of parameter tensors."""

    def __init__(self, params, lr=4e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamState()

    def step(self, grads):
        arrays = {k: self.params[k].data for k in grads}
        adam_step(arrays, grads, self.state, self.lr, self.betas, self.eps, self.weight_decay)
