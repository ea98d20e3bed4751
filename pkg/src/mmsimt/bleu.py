"""BLEU over pre-tokenised text.

Sentence BLEU uses exponential smoothing and effective order, the
sentence-level defaults of sacreBLEU; corpus BLEU pools clipped counts and
is unsmoothed. Scores are on a 0-100 scale.
"""

from __future__ import annotations

import math
from collections import Counter

from .errors import UsageError

MAX_ORDER = 4
# scores are snapped to multiples of 2**-40 so sums and differences of
# scores (the quality reward) are exact in binary floating point
_GRID = 2.0 ** 40


def _tokens(x):
    return x.split() if isinstance(x, str) else list(x)


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_stats(hyp, ref, max_order=MAX_ORDER):
    """Clipped matches and hypothesis n-gram totals for orders 1..max_order."""
    hyp, ref = _tokens(hyp), _tokens(ref)
    correct, total = [], []
    for n in range(1, max_order + 1):
        h, r = ngrams(hyp, n), ngrams(ref, n)
        correct.append(sum(min(c, r[g]) for g, c in h.items()))
        total.append(max(len(hyp) - n + 1, 0))
    return correct, total, len(hyp), len(ref)


def brevity_penalty(hyp_len, ref_len):
    if hyp_len == 0:
        return 0.0
    if hyp_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def snap(score):
    return round(score * _GRID) / _GRID


def sentence_bleu(hyp, ref, max_order=MAX_ORDER):
    correct, total, hyp_len, ref_len = ngram_stats(hyp, ref, max_order)
    if hyp_len == 0 or correct[0] == 0:
        # smoothing never rescues a hypothesis without a single matching word
        return 0.0
    log_sum = 0.0
    order = 0
    zeros = 0
    for c, t in zip(correct, total):
        if t == 0:
            break
        order += 1
        if c == 0:
            zeros += 1
            p = 1.0 / (2 ** zeros * t)
        else:
            p = c / t
        log_sum += math.log(p)
    score = 100.0 * brevity_penalty(hyp_len, ref_len) * math.exp(log_sum / order)
    return snap(min(score, 100.0))


def corpus_bleu(hyps, refs, max_order=MAX_ORDER):
    if len(hyps) != len(refs):
        raise UsageError(f"{len(hyps)} hypotheses for {len(refs)} references")
    if not hyps:
        raise UsageError("corpus BLEU of an empty corpus")
    correct = [0] * max_order
    total = [0] * max_order
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        c, t, hl, rl = ngram_stats(h, r, max_order)
        correct = [a + b for a, b in zip(correct, c)]
        total = [a + b for a, b in zip(total, t)]
        hyp_len += hl
        ref_len += rl
    if min(correct) == 0:
        return 0.0
    log_p = sum(math.log(c / t) for c, t in zip(correct, total)) / max_order
    return min(100.0 * brevity_penalty(hyp_len, ref_len) * math.exp(log_p), 100.0)
