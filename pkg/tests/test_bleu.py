import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmsimt.bleu import brevity_penalty, corpus_bleu, ngram_stats, sentence_bleu, snap
from mmsimt.errors import UsageError

words = st.lists(st.sampled_from("a b c d e".split()), min_size=1, max_size=8)


def hand_pooled_bleu(hyps, refs):
    """Straight transcription of the pooled definition, no shared helpers."""
    correct, total = [0] * 4, [0] * 4
    hl = rl = 0
    for h, r in zip(hyps, refs):
        hl += len(h)
        rl += len(r)
        for n in range(1, 5):
            hg = [tuple(h[i:i + n]) for i in range(len(h) - n + 1)]
            rg = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
            for g in set(hg):
                correct[n - 1] += min(hg.count(g), rg.count(g))
            total[n - 1] += len(hg)
    if min(correct) == 0:
        return 0.0
    bp = 1.0 if hl >= rl else math.exp(1 - rl / hl)
    return 100 * bp * math.exp(sum(math.log(c / t) for c, t in zip(correct, total)) / 4)


class TestSentenceBleu:
    def test_identical(self):
        assert sentence_bleu("a b c d e", "a b c d e") == 100.0

    def test_empty_hypothesis(self):
        assert sentence_bleu([], "a b c") == 0.0

    def test_no_matching_word(self):
        assert sentence_bleu("x y z", "a b c") == 0.0

    def test_smoothed_worked_case(self):
        # 1-4 gram precisions 3/4, 2/3, 1/2 and 0/1; the first zero order becomes 1/(2 * 1)
        expected = 100 * (0.75 * (2 / 3) * 0.5 * 0.5) ** 0.25
        assert sentence_bleu("a b c d", "a b c e") == pytest.approx(expected, abs=1e-9)
        assert abs(sentence_bleu("a b c d", "a b c e") - 59.46) < 0.1

    def test_successive_zero_orders_halve_again(self):
        # "a b x y" vs "a b c d": p = 2/4, 1/3, then 1/(2*2), 1/(4*1)
        expected = 100 * (0.5 * (1 / 3) * 0.25 * 0.25) ** 0.25
        assert sentence_bleu("a b x y", "a b c d") == pytest.approx(expected, abs=1e-9)

    def test_effective_order_for_short_hypotheses(self):
        assert sentence_bleu("a b", "a b") == 100.0

    def test_brevity_penalty(self):
        assert brevity_penalty(4, 4) == 1.0
        assert brevity_penalty(2, 4) == pytest.approx(math.exp(-1))
        assert brevity_penalty(0, 4) == 0.0
        assert sentence_bleu("a b c d", "a b c d e f") == pytest.approx(100 * math.exp(1 - 6 / 4), abs=1e-9)

    def test_scores_lie_on_the_snap_grid(self):
        s = sentence_bleu("a b c d", "a b c e")
        assert snap(s) == s and s * 2 ** 40 == int(s * 2 ** 40)

    @settings(max_examples=200, deadline=None)
    @given(words, words)
    def test_range(self, h, r):
        assert 0.0 <= sentence_bleu(h, r) <= 100.0


class TestCorpusBleu:
    def test_identical(self):
        assert corpus_bleu([["a", "b", "c", "d"], ["e", "f", "g", "h", "i"]],
                           [["a", "b", "c", "d"], ["e", "f", "g", "h", "i"]]) == pytest.approx(100.0)

    def test_zero_four_gram_matches(self):
        assert corpus_bleu(["a b c d", "e f"], ["a b c x", "e f"]) == 0.0

    def test_two_sentence_pooling(self):
        hyps = [["the", "cat", "sat", "on", "a", "mat"], ["a", "dog", "ran"]]
        refs = [["the", "cat", "sat", "on", "the", "mat"], ["the", "dog", "ran", "home"]]
        assert corpus_bleu(hyps, refs) == pytest.approx(hand_pooled_bleu(hyps, refs), abs=1e-9)
        assert corpus_bleu(hyps, refs) > 0

    def test_pooled_not_averaged(self):
        hyps = [["a", "b", "c", "d", "e"], ["f", "g"]]
        refs = [["a", "b", "c", "d", "e"], ["f", "h"]]
        pooled = corpus_bleu(hyps, refs)
        mean = (sentence_bleu(hyps[0], refs[0]) + sentence_bleu(hyps[1], refs[1])) / 2
        assert pooled != pytest.approx(mean)
        assert pooled == pytest.approx(hand_pooled_bleu(hyps, refs))

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            corpus_bleu(["a"], ["a", "b"])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(words, words), min_size=1, max_size=6), st.randoms())
    def test_matches_hand_pooling_and_is_order_free(self, pairs, shuffler):
        hyps, refs = [p[0] for p in pairs], [p[1] for p in pairs]
        assert corpus_bleu(hyps, refs) == pytest.approx(hand_pooled_bleu(hyps, refs), abs=1e-9)
        order = list(range(len(pairs)))
        shuffler.shuffle(order)
        assert corpus_bleu([hyps[i] for i in order], [refs[i] for i in order]) == pytest.approx(
            corpus_bleu(hyps, refs), abs=1e-9)


def test_ngram_stats_clips_counts():
    correct, total, hl, rl = ngram_stats("a a a a", "a b")
    assert correct[0] == 1 and total == [4, 3, 2, 1] and (hl, rl) == (4, 2)
