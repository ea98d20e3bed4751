"""Latency metrics over action traces and the RL reward terms.

All functions are pure. ``|X|`` and ``|Y|`` count the end markers, as the
traces do.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .bleu import corpus_bleu, sentence_bleu
from .errors import MetricError, UsageError
from .policies import READ, WRITE


def _delays(trace):
    g = trace.delays()
    if not g or trace.src_len < 1:
        raise MetricError("latency of an empty trace is undefined")
    return g


def average_proportion(trace):
    g = _delays(trace)
    return sum(g) / (trace.src_len * len(g))


def average_lagging(trace):
    g = _delays(trace)
    X, Y = trace.src_len, len(g)
    tau = next((t for t, d in enumerate(g, 1) if d >= X), Y)
    # exact rationals, rounded once, so the value does not depend on summation order
    lag = sum(Fraction(g[t - 1]) - Fraction((t - 1) * X, Y) for t in range(1, tau + 1))
    return float(lag / tau)


def consecutive_wait(trace):
    """READs since the previous WRITE, reported at each WRITE."""
    _delays(trace)
    out, c = [], 0
    for a in trace.actions:
        if a == READ:
            c += 1
        elif a == WRITE:
            out.append(c)
            c = 0
    return out


@dataclass
class LatencyReport:
    ap: float
    al: float
    cw_values: list
    cw_mean: float

    @classmethod
    def of(cls, trace):
        cw = consecutive_wait(trace)
        return cls(average_proportion(trace), average_lagging(trace), cw, float(np.mean(cw)))


@dataclass
class RewardHyper:
    c_star: float = 2.0
    d_star: float = 0.3
    alpha: float = 0.025
    beta: float = -1.0


def latency_reward(c_t, d_t, hyper=None):
    """``alpha * (sgn(C_t - C*) + 1) + beta * max(D_t - D*, 0)``."""
    h = hyper or RewardHyper()
    return h.alpha * (float(np.sign(c_t - h.c_star)) + 1.0) + h.beta * max(d_t - h.d_star, 0.0)


def quality_reward(prev, now, reference):
    """Change in smoothed sentence BLEU when the partial hypothesis grows from ``prev`` to ``now``."""
    prev, now = list(prev), list(now)
    if now[:len(prev)] != prev:
        raise UsageError("previous partial hypothesis is not a prefix of the current one")
    return sentence_bleu(now, reference) - sentence_bleu(prev, reference)


@dataclass
class MetricRecord:
    system: str
    policy: str | None = None
    k: int | None = None
    bleu: float | None = None
    ap: float | None = None
    al: float | None = None
    cw_mean: float | None = None

    def to_json(self):
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None}, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        fields = {f: d.get(f) for f in cls.__dataclass_fields__}
        if fields["system"] is None:
            raise UsageError("metric record lacks a 'system' field")
        return cls(**fields)


def score_system(hyps, refs, traces=None, system="system", policy=None, k=None):
    """Corpus BLEU plus, when traces are given, mean AP / AL / CW over sentences."""
    rec = MetricRecord(system, policy, k, bleu=corpus_bleu(hyps, refs))
    if traces is not None:
        if len(traces) != len(hyps):
            raise UsageError(f"{len(traces)} traces for {len(hyps)} hypotheses")
        reports = [LatencyReport.of(t) for t in traces]
        rec.ap = float(np.mean([r.ap for r in reports]))
        rec.al = float(np.mean([r.al for r in reports]))
        rec.cw_mean = float(np.mean([r.cw_mean for r in reports]))
    return rec


@dataclass
class ArticleAccuracy:
    accuracy: float
    n_trigger: int
    per_article: dict

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def article_accuracy(hyps, refs, articles):
    """Fraction of trigger sentences whose hypothesis starts with the gold article.

    A trigger sentence is one whose reference begins with a token in
    ``articles``; that token is the gold article.
    """
    if len(hyps) != len(refs):
        raise UsageError(f"{len(hyps)} hypotheses for {len(refs)} references")
    articles = set(articles)
    hits = {a: [0, 0] for a in sorted(articles)}
    for hyp, ref in zip(hyps, refs):
        if ref and ref[0] in articles:
            hits[ref[0]][1] += 1
            hits[ref[0]][0] += int(bool(hyp) and hyp[0] == ref[0])
    n = sum(total for _, total in hits.values())
    if n == 0:
        raise MetricError(f"no reference starts with any of {sorted(articles)}")
    per = {a: (h / t if t else None) for a, (h, t) in hits.items()}
    return ArticleAccuracy(sum(h for h, _ in hits.values()) / n, n, per)
