"""Simultaneous decoding policies producing READ/WRITE action traces.

A policy drives a *session*: any object with ``src_len``,
``initial_state()`` and ``step(state, y_prev, n_read) -> (logits, state)``.
:meth:`TranslationModel.session` provides one; tests script their own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import BOS, EOS
from .errors import FormatError, UsageError

READ, WRITE = "R", "W"
POLICY_KINDS = ("consecutive", "wait_k", "wait_if_diff")


@dataclass
class ActionTrace:
    """Ordered READ/WRITE actions; the i-th READ consumes source position i.

    ``tokens`` are the written ids in order, end marker included.
    """

    actions: str
    src_len: int
    tokens: list = field(default_factory=list)
    truncated: bool = False

    @property
    def tgt_len(self):
        return self.actions.count(WRITE)

    @property
    def n_reads(self):
        return self.actions.count(READ)

    def delays(self):
        """``g(t)``: READs preceding each WRITE."""
        g, reads = [], 0
        for a in self.actions:
            if a == READ:
                reads += 1
            elif a == WRITE:
                g.append(reads)
            else:
                raise FormatError(f"unknown action {a!r}")
        return g

    def validate(self, complete=True):
        g = self.delays()
        if not self.actions or self.actions[0] != READ:
            raise FormatError("trace must start with a READ")
        if any(b < a for a, b in zip(g, g[1:])) or (g and g[0] < 1):
            raise FormatError(f"invalid delays {g}")
        if self.n_reads > self.src_len:
            raise FormatError(f"{self.n_reads} READs for a source of {self.src_len} tokens")
        if complete and self.n_reads != self.src_len:
            raise FormatError(f"incomplete trace: {self.n_reads} of {self.src_len} source tokens read")
        if self.tokens and len(self.tokens) != self.tgt_len:
            raise FormatError(f"{len(self.tokens)} tokens for {self.tgt_len} WRITEs")
        return self

    @classmethod
    def from_delays(cls, g, src_len, tokens=None):
        actions, reads = [], 0
        for d in g:
            actions.append(READ * (d - reads))
            actions.append(WRITE)
            reads = d
        return cls("".join(actions), src_len, list(tokens or []))

    def to_record(self, index=0, policy=None, k=None, delta=None, tokens=None):
        rec = {"index": index, "policy": policy, "k": k}
        if delta is not None:
            rec["delta"] = delta
        rec.update(actions=self.actions, tokens=list(tokens if tokens is not None else self.tokens),
                   src_len=self.src_len, tgt_len=self.tgt_len)
        if self.truncated:
            rec["truncated"] = True
        return rec

    @classmethod
    def from_record(cls, rec):
        try:
            trace = cls(rec["actions"], int(rec["src_len"]), list(rec.get("tokens", [])),
                        bool(rec.get("truncated", False)))
        except KeyError as exc:
            raise FormatError(f"trace record lacks field {exc.args[0]!r}") from None
        if "tgt_len" in rec and int(rec["tgt_len"]) != trace.tgt_len:
            raise FormatError(f"trace record tgt_len {rec['tgt_len']} disagrees with its actions")
        return trace


def write_traces(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_records(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{n}: {exc.msg}") from None
    return out


@dataclass
class PolicyConfig:
    kind: str = "consecutive"
    k: int = 1
    delta: int = 1

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise UsageError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.k < 1:
            raise UsageError("k must be at least 1")
        if self.kind == "wait_if_diff" and self.delta < 1:
            raise UsageError("delta must be at least 1")


def wait_k_g(k, src_len, t):
    """Source tokens readable when writing target token ``t`` (1-based)."""
    return min(k + t - 1, src_len)


def schedule(kind, k=1):
    """Vectorised ``g(t, src_len)`` for training and batched decoding."""
    if kind == "consecutive":
        return lambda t, src_len: np.asarray(src_len)
    if kind == "wait_k":
        return lambda t, src_len: np.minimum(k + t - 1, np.asarray(src_len))
    raise UsageError(f"policy {kind!r} has no fixed schedule")


def default_max_len(src_len):
    return 2 * src_len + 10


class _Run:
    """Bookkeeping shared by the simulators."""

    def __init__(self, session, max_len):
        self.session = session
        self.src_len = session.src_len
        self.max_len = max_len or default_max_len(self.src_len)
        self.actions = []
        self.tokens = []
        self.reads = 0
        self.state = session.initial_state()
        self.y_prev = BOS
        self.truncated = False

    def read_to(self, n):
        n = min(n, self.src_len)
        if n > self.reads:
            self.actions.append(READ * (n - self.reads))
            self.reads = n

    def predict(self, n_read):
        logits, state = self.session.step(self.state, self.y_prev, n_read)
        return int(np.argmax(logits)), state

    def at_limit(self):
        return len(self.tokens) + 1 >= self.max_len

    def write(self, token, state):
        if token == EOS:
            # the end marker is committed only once the whole source is read
            self.read_to(self.src_len)
        self.actions.append(WRITE)
        self.tokens.append(token)
        self.state = state
        self.y_prev = token
        return token == EOS

    def force_close(self):
        self.truncated = True
        return self.write(EOS, self.state)

    def result(self):
        trace = ActionTrace("".join(self.actions), self.src_len, list(self.tokens), self.truncated)
        hyp = self.tokens[:-1] if self.tokens and self.tokens[-1] == EOS else list(self.tokens)
        return hyp, trace


def _session(model, source, features):
    if len(source) == 0:
        raise UsageError("cannot decode an empty source")
    return model.session(source, features)


def simulate_wait_k(model, source, features=None, k=1, max_len=None):
    """Greedy wait-k decoding: token ``t`` is written after ``min(k + t - 1, |X|)`` READs.

    Works on any model, which is what makes consecutive models usable in
    decoding-only mode. Returns ``(hypothesis ids, trace)``.
    """
    if k < 1:
        raise UsageError("k must be at least 1")
    run = _Run(_session(model, source, features), max_len)
    while True:
        run.read_to(wait_k_g(k, run.src_len, len(run.tokens) + 1))
        if run.at_limit():
            run.force_close()
            break
        token, state = run.predict(run.reads)
        if run.write(token, state):
            break
    return run.result()


def consecutive_greedy(model, source, features=None, max_len=None):
    """Read the whole source, then decode greedily."""
    run = _Run(_session(model, source, features), max_len)
    run.read_to(run.src_len)
    while True:
        if run.at_limit():
            run.force_close()
            break
        token, state = run.predict(run.reads)
        if run.write(token, state):
            break
    return run.result()


def simulate_wait_if_diff(model, source, features=None, k=1, delta=1, max_len=None):
    """Wait-if-diff decoding.

    After ``k`` initial READs, each write is preceded by a test: read
    ``delta`` more tokens and compare the most likely next token before and
    after. If it changed, keep testing on the longer prefix; once it is
    stable (or the source is exhausted) write it. Reads, once made, stay
    made. The end marker is never written while source remains; predicting
    it triggers another ``delta`` READs instead.
    """
    if k < 1 or delta < 1:
        raise UsageError("k and delta must both be at least 1")
    run = _Run(_session(model, source, features), max_len)
    X = run.src_len
    run.read_to(k)
    while True:
        if run.at_limit():
            run.force_close()
            break
        token, state = run.predict(run.reads)
        while run.reads < X:
            if token == EOS:
                run.read_to(run.reads + delta)
                token, state = run.predict(run.reads)
                continue
            ahead = min(run.reads + delta, X)
            token2, state2 = run.predict(ahead)
            run.read_to(ahead)
            if token2 == token:
                state = state2
                break
            token, state = token2, state2
        if run.write(token, state):
            break
    return run.result()


def simulate(model, source, features=None, policy=None, max_len=None):
    policy = policy or PolicyConfig()
    if policy.kind == "consecutive":
        return consecutive_greedy(model, source, features, max_len)
    if policy.kind == "wait_k":
        return simulate_wait_k(model, source, features, policy.k, max_len)
    return simulate_wait_if_diff(model, source, features, policy.k, policy.delta, max_len)
