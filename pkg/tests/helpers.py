import numpy as np

from mmsimt.data import EOS


def random_sources(rng, n, vocab=12, low=2, high=9):
    """Id sequences over non-special tokens, each ending with the end marker."""
    out = []
    for _ in range(n):
        length = int(rng.integers(low, high))
        out.append([int(i) for i in rng.integers(4, vocab, size=length)] + [EOS])
    return out


class ScriptedSession:
    """Session whose next-token argmax is ``script(t, n_read)`` (t is 1-based)."""

    def __init__(self, src_len, script, vocab=8):
        self.src_len = src_len
        self.script = script
        self.vocab = vocab
        self.calls = []

    def initial_state(self):
        return 0

    def step(self, state, y_prev, n_read):
        t = state + 1
        self.calls.append((t, n_read))
        logits = np.zeros(self.vocab)
        logits[self.script(t, n_read)] = 1.0
        return logits, t


class ScriptedModel:
    """Stands in for a model: ``session()`` hands out a scripted session."""

    def __init__(self, script, vocab=8):
        self.script = script
        self.vocab = vocab

    def session(self, source, features=None):
        return ScriptedSession(len(source), self.script, self.vocab)
