import numpy as np
import pytest
from helpers import ScriptedModel, random_sources

from mmsimt.data import EOS, Sample
from mmsimt.errors import FormatError, UsageError
from mmsimt.metrics import average_proportion
from mmsimt.policies import (
    ActionTrace, PolicyConfig, consecutive_greedy, default_max_len, read_records, schedule, simulate,
    simulate_wait_if_diff, simulate_wait_k, wait_k_g, write_traces,
)


@pytest.mark.parametrize("k,src_len,t,expected", [(2, 5, 1, 2), (7, 3, 1, 3), (1, 9, 4, 4)])
def test_wait_k_g(k, src_len, t, expected):
    assert wait_k_g(k, src_len, t) == expected


def test_vectorised_schedule():
    g = schedule("wait_k", 2)
    np.testing.assert_array_equal(g(3, np.array([2, 5, 9])), [2, 4, 4])
    np.testing.assert_array_equal(schedule("consecutive")(1, np.array([3, 4])), [3, 4])
    with pytest.raises(UsageError):
        schedule("wait_if_diff")


class TestActionTrace:
    def test_delays(self):
        assert ActionTrace("RWRRWW", 3).delays() == [1, 3, 3]

    def test_from_delays_round_trip(self):
        t = ActionTrace.from_delays([1, 2, 3, 3], 3)
        assert t.actions == "RWRWRWW" and t.delays() == [1, 2, 3, 3]

    def test_validate_rejects_incomplete(self):
        with pytest.raises(FormatError):
            ActionTrace("RW", 3).validate()
        ActionTrace("RW", 3).validate(complete=False)

    def test_validate_rejects_leading_write(self):
        with pytest.raises(FormatError):
            ActionTrace("WR", 1).validate()

    def test_validate_rejects_over_reading(self):
        with pytest.raises(FormatError):
            ActionTrace("RRRW", 2).validate()

    def test_unknown_action(self):
        with pytest.raises(FormatError):
            ActionTrace("RXW", 1).delays()

    def test_record_round_trip(self, tmp_path):
        t = ActionTrace("RRWRW", 3, [5, 2])
        write_traces(tmp_path / "t.jsonl", [t.to_record(0, "wait_k", 2)])
        rec = read_records(tmp_path / "t.jsonl")[0]
        assert rec["tgt_len"] == 2 and rec["k"] == 2
        assert ActionTrace.from_record(rec) == t

    def test_record_errors(self, tmp_path):
        with pytest.raises(FormatError):
            ActionTrace.from_record({"src_len": 2})
        with pytest.raises(FormatError):
            ActionTrace.from_record({"actions": "RW", "src_len": 1, "tgt_len": 5})
        (tmp_path / "bad.jsonl").write_text('{"a": 1}\n{oops\n')
        with pytest.raises(FormatError, match=":2:"):
            read_records(tmp_path / "bad.jsonl")


def test_policy_config_validation():
    with pytest.raises(UsageError):
        PolicyConfig("sometimes")
    with pytest.raises(UsageError):
        PolicyConfig("wait_k", k=0)
    with pytest.raises(UsageError):
        PolicyConfig("wait_if_diff", delta=0)


class TestScripted:
    def test_wait_one_trace_enumeration(self):
        model = ScriptedModel(lambda t, n: EOS if t == 4 else 5)
        hyp, trace = simulate_wait_k(model, [4, 4, EOS], k=1)
        assert trace.actions == "RWRWRWW"
        assert trace.delays() == [1, 2, 3, 3]
        assert trace.n_reads == 3 and trace.tgt_len == 4 and hyp == [5, 5, 5]

    def test_wait_k_defers_end_marker(self):
        model = ScriptedModel(lambda t, n: EOS)
        hyp, trace = simulate_wait_k(model, [4, 4, 4, EOS], k=1)
        assert hyp == [] and trace.actions == "RRRRW"

    def test_wait_if_diff_flip_after_second_read(self):
        model = ScriptedModel(lambda t, n: (5 if n < 2 else 6) if t == 1 else EOS)
        _, trace = simulate_wait_if_diff(model, [4, 4, 4, 4, EOS], k=1, delta=1)
        assert trace.actions.index("W") == 3

    def test_wait_if_diff_stable_prediction_reads_delta_ahead(self):
        model = ScriptedModel(lambda t, n: 5 if t < 3 else EOS)
        _, trace = simulate_wait_if_diff(model, [4, 4, 4, 4, 4, EOS], k=1, delta=1)
        assert trace.delays()[:2] == [2, 3]

    def test_wait_if_diff_suppresses_early_end_marker(self):
        model = ScriptedModel(lambda t, n: EOS)
        hyp, trace = simulate_wait_if_diff(model, [4, 4, 4, EOS], k=1, delta=2)
        assert hyp == [] and trace.actions == "RRRRW"

    def test_truncation(self):
        model = ScriptedModel(lambda t, n: 5)
        hyp, trace = simulate_wait_k(model, [4, 4, EOS], k=1)
        assert trace.truncated
        assert trace.tgt_len == default_max_len(3) and trace.tokens[-1] == EOS
        assert len(hyp) == default_max_len(3) - 1
        trace.validate()

    def test_custom_max_len(self):
        hyp, trace = consecutive_greedy(ScriptedModel(lambda t, n: 5), [4, EOS], max_len=3)
        assert trace.tokens == [5, 5, EOS]

    def test_empty_source(self):
        with pytest.raises(UsageError):
            simulate_wait_k(ScriptedModel(lambda t, n: 5), [])


class TestModelPolicies:
    @pytest.fixture(params=["UNI", "ENC-OD", "DEC-OD"])
    def setup(self, request, make_model, rng):
        model = make_model(request.param, seed=3)
        sources = random_sources(rng, 15)
        feats = [rng.normal(size=(3, 5)) for _ in sources] if model.config.multimodal else [None] * 15
        return model, sources, feats

    def test_invariants(self, setup):
        model, sources, feats = setup
        for policy in [PolicyConfig(), PolicyConfig("wait_k", 2), PolicyConfig("wait_if_diff", 1, 2)]:
            for src, f in zip(sources, feats):
                _, trace = simulate(model, src, f, policy)
                trace.validate()
                g = trace.delays()
                assert g[0] >= 1 and max(g) <= len(src)

    def test_degenerate_k(self, setup):
        model, sources, feats = setup
        for src, f in zip(sources, feats):
            ref, _ = consecutive_greedy(model, src, f)
            assert simulate_wait_k(model, src, f, k=len(src))[0] == ref
            assert simulate_wait_if_diff(model, src, f, k=len(src))[0] == ref

    def test_consecutive_reads_everything_first(self, setup):
        model, sources, feats = setup
        _, trace = consecutive_greedy(model, sources[0], feats[0])
        assert trace.actions.startswith("R" * len(sources[0])) and average_proportion(trace) == 1.0

    def test_wait_if_diff_dominates_wait_k(self, setup):
        model, sources, feats = setup
        for k in (1, 2):
            for src, f in zip(sources, feats):
                g_wk = simulate_wait_k(model, src, f, k=k)[1].delays()
                g_wid = simulate_wait_if_diff(model, src, f, k=k)[1].delays()
                for t, d in enumerate(g_wid, 1):
                    assert d >= wait_k_g(k, len(src), t)
                assert len(g_wk) >= 1

    def test_deterministic(self, setup):
        model, sources, feats = setup
        a = simulate_wait_if_diff(model, sources[1], feats[1], k=1, delta=2)
        b = simulate_wait_if_diff(model, sources[1], feats[1], k=1, delta=2)
        assert a == b

    def test_simulator_matches_loss_schedule(self, setup):
        model, sources, feats = setup
        for k in (1, 3):
            for src, f in zip(sources, feats):
                hyp, trace = simulate_wait_k(model, src, f, k=k)
                if trace.truncated:
                    continue
                # the loss sees the wait-k schedule; the end marker is predicted under it too
                written = trace.tokens
                logits = model.teacher_forced_logits(Sample(src, written, 0, f),
                                                     lambda t: wait_k_g(k, len(src), t))
                np.testing.assert_array_equal(logits.argmax(axis=1), written)


def test_overfit_copy_model_copies(copy_setup):
    result, corpus = copy_setup
    hits = [consecutive_greedy(result.model, s.src)[0] == s.tgt[:-1] for s in corpus]
    assert np.mean(hits) > 0.9
