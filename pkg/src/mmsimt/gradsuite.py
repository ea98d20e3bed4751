"""Finite-difference gradient suite over every differentiable op and the
full sentence loss of each model variant, run in float64."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import compute as C
from .compute import Tensor
from .data import Sample
from .model import VARIANTS, ModelConfig, TranslationModel

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_error: float
    worst_input: str

    @property
    def passed(self):
        return self.max_error < TOLERANCE

    def to_record(self):
        return {"check": self.name, "max_rel_error": self.max_error, "worst": self.worst_input,
                "passed": self.passed}


def _rand(rng, *shape):
    return Tensor(rng.uniform(-1, 1, size=shape), requires_grad=True, dtype=np.float64)


def _const(rng, *shape):
    return Tensor(rng.uniform(-1, 1, size=shape), dtype=np.float64)


def op_cases(rng):
    """``name -> (fn, inputs)`` with ``fn`` a scalar closure over ``inputs``."""
    cases = {}
    a, b, w = _rand(rng, 3, 4), _rand(rng, 4, 2), _const(rng, 3, 2)
    cases["matmul"] = (lambda: C.total(C.mul(C.matmul(a, b), w)), {"a": a, "b": b})
    x, y, wx = _rand(rng, 3, 4), _rand(rng, 3, 4), _const(rng, 3, 4)
    row = _rand(rng, 4)
    cases["add"] = (lambda: C.total(C.mul(C.add(x, row), wx)), {"x": x, "row": row})
    cases["sub"] = (lambda: C.total(C.mul(C.sub(x, y), wx)), {"x": x, "y": y})
    cases["mul"] = (lambda: C.total(C.mul(C.mul(x, y), wx)), {"x": x, "y": y})
    cases["scale_transpose"] = (lambda: C.total(C.mul(C.scale(C.transpose(x), -1.5), C.transpose(wx))),
                                {"x": x})
    cases["tanh"] = (lambda: C.total(C.mul(C.tanh(x), wx)), {"x": x})
    cases["sigmoid"] = (lambda: C.total(C.mul(C.sigmoid(x), wx)), {"x": x})
    cases["softmax"] = (lambda: C.total(C.mul(C.softmax(x), wx)), {"x": x})
    cases["log_softmax"] = (lambda: C.total(C.mul(C.log_softmax(x), wx)), {"x": x})
    targets, mask = np.array([0, 3, 1]), np.array([1.0, 1.0, 0.0])
    cases["cross_entropy"] = (lambda: C.cross_entropy(x, targets, mask), {"x": x})
    gain, bias = _rand(rng, 4), _rand(rng, 4)
    cases["layer_norm"] = (lambda: C.total(C.mul(C.layer_norm(x, gain, bias), wx)),
                           {"x": x, "gain": gain, "bias": bias})
    keep_rng_seed = int(rng.integers(1 << 30))
    cases["dropout"] = (lambda: C.total(C.mul(C.dropout(x, 0.3, True, np.random.default_rng(keep_rng_seed)), wx)),
                        {"x": x})
    xi, h = _rand(rng, 2, 3), _rand(rng, 2, 4)
    gwx, gwh, gbx, gbh, gw = _rand(rng, 3, 12), _rand(rng, 4, 12), _rand(rng, 12), _rand(rng, 12), _const(rng, 2, 4)
    cases["gru_cell"] = (lambda: C.total(C.mul(C.gru_cell(xi, h, gwx, gwh, gbx, gbh), gw)),
                         {"x": xi, "h": h, "w_x": gwx, "w_h": gwh, "b_x": gbx, "b_h": gbh})
    H, q = _rand(rng, 2, 4, 3), _rand(rng, 2, 5)
    wk, wq, v, aw = _rand(rng, 3, 6), _rand(rng, 5, 6), _rand(rng, 6), _const(rng, 2, 3)
    lens = np.array([3, 4])
    cases["additive_attention"] = (lambda: C.total(C.mul(C.additive_attention(H, q, lens, wk, wq, v)[0], aw)),
                                   {"H": H, "query": q, "w_key": wk, "w_query": wq, "v": v})
    Q, K, V, sw = _rand(rng, 2, 4, 3), _rand(rng, 2, 5, 3), _rand(rng, 2, 5, 3), _const(rng, 2, 4, 3)
    cases["scaled_dot_attention"] = (lambda: C.total(C.mul(C.scaled_dot_attention(Q, K, V), sw)),
                                     {"Q": Q, "K": K, "V": V})
    table, ids, ew = _rand(rng, 5, 3), np.array([[0, 2, 2], [4, 1, 0]]), _const(rng, 2, 3, 3)
    cases["embedding_stack"] = (
        lambda: C.total(C.mul(C.stack([C.embedding(table, ids[:, j]) for j in range(3)], axis=1), ew)),
        {"table": table})
    return cases


def loss_case(variant, rng, dropout=0.2):
    """Full sentence loss of a tiny model under a wait-1 schedule, dropout on."""
    cfg = ModelConfig(9, 10, variant=variant, emb_dim=4, hidden_dim=5, feat_dim=6, dropout=dropout)
    model = TranslationModel(cfg, seed=int(rng.integers(1 << 30)))
    feats = rng.normal(size=(3, 6)) if cfg.multimodal else None
    sample = Sample([4, 5, 6, 7, 2], [8, 4, 9, 2], 0, feats)
    mask_seed = int(rng.integers(1 << 30))

    def fn():
        return model.sentence_loss(sample, lambda t: min(t, 5), rng=np.random.default_rng(mask_seed),
                                   training=True)

    return fn, model.params


def _check(name, fn, inputs, seed):
    errors = C.gradcheck(fn, inputs, seed=seed)
    worst = max(errors, key=errors.get)
    return CheckResult(name, errors[worst], worst)


def run_suite(seed=0, variants=VARIANTS, ops=True):
    """Run every check; returns a list of :class:`CheckResult`."""
    results = []
    with C.precision(np.float64):
        rng = np.random.default_rng(seed)
        if ops:
            for name, (fn, inputs) in op_cases(rng).items():
                results.append(_check(f"op:{name}", fn, inputs, seed))
        for variant in variants:
            fn, params = loss_case(variant, rng)
            results.append(_check(f"loss:{variant}", fn, params, seed))
    return results
