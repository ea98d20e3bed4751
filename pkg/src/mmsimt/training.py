"""ADAM training with gradient clipping, learning-rate halving and early stopping."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import compute as C
from .bleu import corpus_bleu
from .compute import no_grad
from .data import batch_iter
from .errors import IngestionError, TrainingDiverged
from .model import ModelConfig, TranslationModel
from .policies import schedule

log = logging.getLogger(__name__)


class PlateauSchedule:
    """Tracks the validation score for lr halving and early stopping.

    The lr is halved every ``lr_patience`` consecutive epochs without a new
    best score; training stops after ``patience`` such epochs.
    """

    def __init__(self, lr, lr_patience=2, patience=10):
        self.lr = lr
        self.lr_patience = lr_patience
        self.patience = patience
        self.best = -math.inf
        self.bad_epochs = 0

    def update(self, score):
        """Record an epoch's score; returns ``True`` when training should stop."""
        if score > self.best:
            self.best = score
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs % self.lr_patience == 0:
            self.lr /= 2.0
        return self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_bleu: float
    dev_ppl: float
    lr: float
    seconds: float
    dev_policy: str

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrainResult:
    model: TranslationModel
    log: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def snapshot(params):
    return {k: C.Tensor(v.data.copy(), requires_grad=True, name=k, dtype=v.dtype) for k, v in params.items()}


def model_config_for(config, corpus):
    feat_dim = 2048
    if corpus.features is not None:
        feat_dim = int(corpus.features.shape[-1])
    return ModelConfig(len(corpus.src_vocab), len(corpus.tgt_vocab), variant=config.variant,
                       emb_dim=config.emb_dim, hidden_dim=config.hidden_dim, feat_dim=feat_dim,
                       dropout=config.dropout)


def evaluate(model, corpus, g, batch_size=64):
    """Dev perplexity under schedule ``g`` and corpus BLEU of batched greedy output."""
    nll = tokens = 0.0
    hyps, refs = [], []
    with no_grad():
        for batch in batch_iter(corpus, batch_size, shuffle=False):
            loss, n = model.batch_loss(batch, g)
            nll += loss.item()
            tokens += n
    for start in range(0, len(corpus), batch_size):
        chunk = corpus.samples[start:start + batch_size]
        feats = None if chunk[0].features is None else np.stack([s.features for s in chunk])
        out = model.greedy_batch([s.src for s in chunk], g, feats)
        hyps += [corpus.tgt_vocab.decode(o) for o in out]
        refs += [corpus.tgt_vocab.decode(s.tgt) for s in chunk]
    return corpus_bleu(hyps, refs), math.exp(nll / max(tokens, 1.0)), hyps


def train(config, corpus, dev_corpus=None, seed=None, checkpoint_fn=None, on_epoch=None):
    """Train a model on ``corpus`` following ``config`` (a :class:`RunConfig`).

    Dev BLEU (decoded with the model's own training schedule) drives lr
    halving and early stopping; the returned model holds the parameters of
    the epoch with the lowest dev perplexity. ``checkpoint_fn(model, record)``
    is called after every epoch with the current parameters.
    """
    if len(corpus) == 0:
        raise IngestionError("training corpus is empty")
    dev_corpus = dev_corpus if dev_corpus is not None else corpus
    if len(dev_corpus) == 0:
        raise IngestionError("dev corpus is empty")
    seed = config.seed if seed is None else seed
    model = TranslationModel(model_config_for(config, corpus), seed=seed)
    g = schedule(config.policy, config.k)
    dev_policy = "consecutive" if config.policy == "consecutive" else f"wait_k(k={config.k})"
    opt = C.Adam(model.params, lr=config.lr, weight_decay=config.weight_decay)
    plateau = PlateauSchedule(config.lr, config.lr_patience, config.patience)
    rng = np.random.default_rng(seed)
    result = TrainResult(model)
    best_ppl = math.inf
    best_params = snapshot(model.params)
    last_good = snapshot(model.params)

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        opt.lr = plateau.lr
        loss_sum = tok_sum = 0.0
        for batch in batch_iter(corpus, config.batch_size, seed=seed * 100003 + epoch):
            loss, n = model.batch_loss(batch, g, training=True, rng=rng)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", params=last_good, log=result.log)
            C.scale(loss, 1.0 / n).backward()
            grads = {k: p.grad for k, p in model.params.items() if p.grad is not None}
            grads, _ = C.clip_global_norm(grads, config.clip)
            try:
                opt.step(grads)
            except FloatingPointError as exc:
                raise TrainingDiverged(str(exc), params=last_good, log=result.log) from None
            for p in model.params.values():
                p.zero_grad()
            loss_sum += value
            tok_sum += n
        bleu, ppl, _ = evaluate(model, dev_corpus, g)
        rec = EpochRecord(epoch, loss_sum / tok_sum, bleu, ppl, opt.lr, time.perf_counter() - t0, dev_policy)
        result.log.append(rec)
        last_good = snapshot(model.params)
        if ppl < best_ppl:
            best_ppl = ppl
            best_params = last_good
            result.best_epoch = epoch
        log.info("epoch %d loss %.4f dev bleu %.2f ppl %.3f lr %.2e", epoch, rec.train_loss, bleu, ppl, opt.lr)
        if checkpoint_fn is not None:
            checkpoint_fn(model, rec)
        if on_epoch is not None:
            on_epoch(rec)
        if plateau.update(bleu):
            result.stopped_early = True
            break

    model.params = best_params
    return result
