import numpy as np
import pytest

from mmsimt.config import RunConfig
from mmsimt.data import synth_task
from mmsimt.model import ModelConfig, TranslationModel
from mmsimt.training import train

_VERDICTS = []


class Verdicts:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return passed


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_model():
    def make(variant="UNI", src=12, tgt=13, emb=6, hidden=8, feat=5, dropout=0.0, seed=0):
        return TranslationModel(ModelConfig(src, tgt, variant=variant, emb_dim=emb, hidden_dim=hidden,
                                            feat_dim=feat, dropout=dropout), seed=seed)
    return make


@pytest.fixture(scope="session")
def copy_setup():
    """A unimodal model trained consecutively on the 50-pair copy task."""
    corpus = synth_task("copy", 50, seed=0).corpus()
    cfg = RunConfig(emb_dim=32, hidden_dim=64, lr=0.005, batch_size=5, max_epochs=30, dropout=0.0,
                    patience=30, lr_patience=30)
    result = train(cfg, corpus, seed=1)
    return result, corpus
