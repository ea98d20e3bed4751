"""Central finite-difference gradient checking (run under float64)."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def relative_error(analytic, numeric, floor=1e-5):
    """``max|a - n| / max(max|a|, max|n|, floor)`` over one tensor.

    The floor stops finite-difference round-off on near-zero gradients
    from reading as a large relative error.
    """
    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def numerical_gradient(fn, tensor, h=1e-5, max_entries=None, rng=None):
    """Central differences of scalar ``fn()`` w.r.t. entries of ``tensor``.

    With ``max_entries`` set, only a random subset of entries is perturbed;
    the returned mask marks which ones.
    """
    flat = tensor.data.reshape(-1)
    idx = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
        rng = rng or np.random.default_rng(0)
        idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
    grad = np.zeros(flat.size, dtype=np.float64)
    mask = np.zeros(flat.size, dtype=bool)
    with no_grad():
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            fp = float(fn().data)
            flat[i] = old - h
            fm = float(fn().data)
            flat[i] = old
            grad[i] = (fp - fm) / (2 * h)
            mask[i] = True
    return grad.reshape(tensor.shape), mask.reshape(tensor.shape)


def gradcheck(fn, inputs, h=1e-5, max_entries=None, seed=0):
    """Compare backprop gradients of scalar ``fn()`` with finite differences.

    ``inputs`` maps names to leaf tensors that ``fn`` closes over. Returns a
    dict of per-input relative errors.
    """
    for t in inputs.values():
        t.requires_grad = True
        t.zero_grad()
    out = fn()
    out.backward()
    rng = np.random.default_rng(seed)
    errors = {}
    for name, t in inputs.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric, mask = numerical_gradient(fn, t, h=h, max_entries=max_entries, rng=rng)
        errors[name] = relative_error(analytic[mask], numeric[mask])
    return errors


def random_tensor(shape, rng, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), dtype=np.float64)
