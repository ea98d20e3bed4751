import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mmsimt.data import synth_task
from mmsimt.errors import AlignmentError, ConfigError, DimensionError, NumericError, UsageError
from mmsimt.estimator import SimultaneousTranslator
from mmsimt.validation import check_features, check_parallel, check_policy, check_sentences

FAST = dict(emb_dim=8, hidden_dim=16, lr=0.01, batch_size=8, dropout=0.0, max_epochs=3)


@pytest.fixture(scope="module")
def gender():
    return synth_task("gender", 40, seed=3)


class TestValidation:
    def test_sentences_from_strings_and_lists(self):
        assert check_sentences(["a b", ["c"]]) == [["a", "b"], ["c"]]

    @pytest.mark.parametrize("bad", ["a b", [], [""], [["a", 3]]])
    def test_bad_sentences(self, bad):
        with pytest.raises(UsageError):
            check_sentences(bad)

    def test_parallel_length(self):
        with pytest.raises(AlignmentError):
            check_parallel(["a"], ["b", "c"])
        with pytest.raises(ValueError):
            check_parallel(["a"], ["b", "c"])

    def test_features(self):
        assert check_features(None, 3, required=False) is None
        with pytest.raises(ConfigError):
            check_features(None, 3, required=True)
        assert check_features(np.ones((2, 8, 8, 4)), 2, True).shape == (2, 64, 4)
        with pytest.raises(DimensionError):
            check_features(np.ones((2, 4)), 2, True)
        with pytest.raises(AlignmentError):
            check_features(np.ones((3, 2, 4)), 2, True)
        with pytest.raises(DimensionError):
            check_features(np.ones((2, 2, 4)), 2, True, feat_dim=5)
        with pytest.raises(NumericError):
            check_features(np.full((1, 2, 2), np.nan), 1, True)

    def test_policy_spellings(self):
        p = check_policy("Wait-If-Diff", 2, 3)
        assert (p.kind, p.k, p.delta) == ("wait_if_diff", 2, 3)


class TestEstimator:
    def test_params_round_trip(self):
        est = SimultaneousTranslator(variant="DEC-OD", k=3)
        params = est.get_params()
        assert params["variant"] == "DEC-OD" and params["k"] == 3 and params["emb_dim"] == 200
        other = clone(est).set_params(k=5)
        assert other.k == 5 and est.k == 3

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            SimultaneousTranslator().predict(["a b"])

    def test_fit_predict_unimodal(self, gender):
        est = SimultaneousTranslator(**FAST).fit(gender.sources, gender.targets)
        hyps = est.predict(gender.sources[:5])
        assert len(hyps) == 5 and all(isinstance(h, list) for h in hyps)
        assert est.n_epochs_ == 3 and len(est.training_log_) == 3
        assert 0.0 <= est.score(gender.sources, gender.targets) <= 100.0

    def test_multimodal_needs_features(self, gender):
        est = SimultaneousTranslator(variant="DEC-OD", **FAST)
        with pytest.raises(ConfigError):
            est.fit(gender.sources, gender.targets)
        est.fit(gender.sources, gender.targets, features=gender.features,
                eval_set=(gender.sources[:10], gender.targets[:10], gender.features[:10]))
        with pytest.raises(ConfigError):
            est.predict(gender.sources)
        assert len(est.predict(gender.sources[:3], gender.features[:3])) == 3

    def test_simulate_and_evaluate(self, gender):
        est = SimultaneousTranslator(policy="wait-k", k=2, **FAST).fit(gender.sources, gender.targets)
        hyps, traces = est.simulate(gender.sources[:4])
        assert len(traces) == 4 and all(t.delays()[0] == 2 for t in traces)
        rec = est.evaluate(gender.sources[:4], gender.targets[:4])
        assert rec.k == 2 and rec.ap is not None

    def test_unknown_variant(self, gender):
        with pytest.raises(ValueError):
            SimultaneousTranslator(variant="TRI").fit(gender.sources, gender.targets)

    def test_seeded(self, gender):
        a = SimultaneousTranslator(random_state=4, **FAST).fit(gender.sources, gender.targets)
        b = SimultaneousTranslator(random_state=4, **FAST).fit(gender.sources, gender.targets)
        assert [r.train_loss for r in a.training_log_] == [r.train_loss for r in b.training_log_]
