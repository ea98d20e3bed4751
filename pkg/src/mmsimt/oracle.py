"""Multi-run, multi-k oracle: per sentence, the median run of each wait-k
system, then the best of those across k (lowest k on ties)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bleu import corpus_bleu, sentence_bleu
from .errors import UsageError
from .metrics import average_lagging

DEFAULT_K_SET = (1, 2, 3, 5, 7)
LOW_LATENCY_K_SET = (1, 2, 3)


@dataclass
class OracleCandidate:
    hyp: list
    bleu: float
    k: int
    trace: object = None
    run: int = 0


@dataclass
class OracleResult:
    bleu: float
    al: float
    selected: list


def median_index(scores):
    """Run holding the (lower) median score; ties go to the lowest run index."""
    if len(scores) == 0:
        raise UsageError("median over zero runs")
    ordered = sorted(scores)
    median = ordered[(len(ordered) - 1) // 2]
    return next(i for i, s in enumerate(scores) if s == median)


def median_run(hyps_per_run, ref):
    """Index of the run whose hypothesis has the median sentence BLEU."""
    return median_index([sentence_bleu(h, ref) for h in hyps_per_run])


def oracle_select(candidates):
    """Highest sentence BLEU; ties go to the smallest k.

    ``candidates`` is either a list of :class:`OracleCandidate` or a mapping
    ``k -> OracleCandidate``.
    """
    if isinstance(candidates, dict):
        candidates = list(candidates.values())
    if not candidates:
        raise UsageError("oracle selection over an empty candidate list")
    return min(candidates, key=lambda c: (-c.bleu, c.k))


def oracle_report(refs, grid, k_set=DEFAULT_K_SET, n_runs=3):
    """Run the oracle over ``grid[(sentence, k, run)] = (hyp_tokens, trace)``.

    Returns corpus BLEU of the selected hypotheses and AL averaged over their
    traces (AL is NaN when traces are absent).
    """
    selected = []
    for n, ref in enumerate(refs):
        cands = []
        for k in k_set:
            runs = []
            for r in range(n_runs):
                try:
                    runs.append(grid[(n, k, r)])
                except KeyError:
                    raise UsageError(f"oracle grid lacks cell (sentence={n}, k={k}, run={r})") from None
            hyps = [h for h, _ in runs]
            scores = [sentence_bleu(h, ref) for h in hyps]
            m = median_index(scores)
            cands.append(OracleCandidate(list(hyps[m]), scores[m], k, runs[m][1], m))
        selected.append(oracle_select(cands))
    bleu = corpus_bleu([c.hyp for c in selected], refs)
    traces = [c.trace for c in selected]
    al = float(np.mean([average_lagging(t) for t in traces])) if all(t is not None for t in traces) else float("nan")
    return OracleResult(bleu, al, selected)
