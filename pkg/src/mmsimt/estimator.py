"""scikit-learn style wrapper around training and simultaneous decoding."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bleu import corpus_bleu
from .config import RunConfig
from .data import corpus_from_tokens
from .metrics import score_system
from .model import VARIANTS
from .policies import simulate
from .training import train
from .validation import check_features, check_parallel, check_policy, check_sentences


class SimultaneousTranslator(BaseEstimator):
    """Recurrent encoder-decoder translator with optional visual grounding.

    ``train_policy``/``train_k`` choose the prefix schedule used in training
    (``consecutive`` or ``wait_k``); ``policy``/``k``/``delta`` choose how
    :meth:`predict` decodes. Sentences are token lists or whitespace
    separated strings; ``features`` is an ``(n, regions, dim)`` array aligned
    with the sentences and is required by the multimodal variants.

    Examples
    --------
    >>> est = SimultaneousTranslator(emb_dim=16, hidden_dim=32, max_epochs=2)
    >>> est.fit([["a", "b"]], [["x", "y"]]).predict([["a", "b"]])  # doctest: +SKIP
    """

    def __init__(self, variant="UNI", train_policy="consecutive", train_k=1, policy="consecutive", k=1,
                 delta=1, emb_dim=200, hidden_dim=320, lr=0.0004, batch_size=64, weight_decay=1e-5,
                 clip=1.0, dropout=0.5, max_epochs=50, patience=10, lr_patience=2, random_state=0):
        self.variant = variant
        self.train_policy = train_policy
        self.train_k = train_k
        self.policy = policy
        self.k = k
        self.delta = delta
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        self.lr = lr
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.clip = clip
        self.dropout = dropout
        self.max_epochs = max_epochs
        self.patience = patience
        self.lr_patience = lr_patience
        self.random_state = random_state

    def _run_config(self):
        return RunConfig(variant=self.variant, policy=self.train_policy.replace("-", "_"), k=self.train_k,
                         emb_dim=self.emb_dim, hidden_dim=self.hidden_dim, lr=self.lr,
                         batch_size=self.batch_size, weight_decay=self.weight_decay, clip=self.clip,
                         dropout=self.dropout, max_epochs=self.max_epochs, patience=self.patience,
                         lr_patience=self.lr_patience, seed=int(self.random_state or 0))

    @property
    def _multimodal(self):
        return self.variant != "UNI"

    def fit(self, X, y, features=None, eval_set=None):
        """Train on parallel sentences.

        ``eval_set`` is an optional ``(X_dev, y_dev)`` or
        ``(X_dev, y_dev, features_dev)`` tuple for model selection; the
        training data is used when it is absent.
        """
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        config = self._run_config()
        X, y = check_parallel(X, y)
        feats = check_features(features, len(X), self._multimodal)
        corpus = corpus_from_tokens(X, y)
        if feats is not None:
            corpus.attach_features(feats)
        dev = None
        if eval_set is not None:
            Xd, yd = check_parallel(eval_set[0], eval_set[1])
            fd = check_features(eval_set[2] if len(eval_set) > 2 else None, len(Xd), self._multimodal)
            dev = corpus_from_tokens(Xd, yd, corpus.src_vocab, corpus.tgt_vocab)
            if fd is not None:
                dev.attach_features(fd)
        result = train(config, corpus, dev)
        self.model_ = result.model
        self.src_vocab_ = corpus.src_vocab
        self.tgt_vocab_ = corpus.tgt_vocab
        self.training_log_ = result.log
        self.best_epoch_ = result.best_epoch
        self.n_epochs_ = len(result.log)
        return self

    def _decode(self, X, features):
        check_is_fitted(self, "model_")
        X = check_sentences(X)
        feats = check_features(features, len(X), self._multimodal, self.model_.config.feat_dim)
        policy = check_policy(self.policy, self.k, self.delta)
        hyps, traces = [], []
        for i, sent in enumerate(X):
            ids = self.src_vocab_.encode(sent)
            hyp, trace = simulate(self.model_, ids, None if feats is None else feats[i], policy)
            hyps.append(self.tgt_vocab_.decode(hyp))
            traces.append(trace)
        return hyps, traces

    def predict(self, X, features=None):
        """Decoded token lists under the configured decoding policy."""
        return self._decode(X, features)[0]

    def simulate(self, X, features=None):
        """Like :meth:`predict` but also returns the READ/WRITE traces."""
        return self._decode(X, features)

    def score(self, X, y, features=None):
        """Corpus BLEU of :meth:`predict` against ``y``."""
        return corpus_bleu(self.predict(X, features), check_sentences(y, "y"))

    def evaluate(self, X, y, features=None):
        """BLEU and mean latency statistics as a :class:`MetricRecord`."""
        hyps, traces = self._decode(X, features)
        return score_system(hyps, check_sentences(y, "y"), traces, system=self.variant,
                            policy=self.policy, k=None if self.policy == "consecutive" else self.k)

    def sequence_accuracy(self, X, y, features=None):
        hyps = self.predict(X, features)
        return float(np.mean([h == r for h, r in zip(hyps, check_sentences(y, "y"))]))
