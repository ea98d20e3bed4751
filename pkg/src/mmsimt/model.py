"""Recurrent attentional encoder-decoder with optional visual grounding.

Variants:

* ``UNI``: unimodal. A 2-layer unidirectional GRU encoder feeds a
  conditional GRU decoder (GRU, attention, GRU) with tied target embeddings.
* ``ENC-OD``: each encoder state attends (scaled dot product) over projected
  region features; the memory row is ``LayerNorm(M_i + h_i)``.
* ``DEC-OC`` / ``DEC-OD``: the decoder runs a second additive attention over
  the projected regions and adds its context to the textual one.

Multimodal variants pass both the textual states and the projected regions
through their own layer norm followed by dropout before combining them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import compute as C
from .compute import Tensor, no_grad
from .compute.tensor import as_tensor
from .data import BOS, EOS, PAD
from .errors import ConfigError, PrefixError, ScheduleError, VocabularyError

VARIANTS = ("UNI", "ENC-OD", "DEC-OC", "DEC-OD")


@dataclass
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    variant: str = "UNI"
    emb_dim: int = 200
    hidden_dim: int = 320
    feat_dim: int = 2048
    enc_layers: int = 2
    dropout: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown model variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.enc_layers < 1:
            raise ConfigError("encoder needs at least one layer")

    @property
    def multimodal(self):
        return self.variant != "UNI"

    @property
    def decoder_visual(self):
        return self.variant in ("DEC-OC", "DEC-OD")

    def to_dict(self):
        return asdict(self)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()


@dataclass(frozen=True)
class EncoderState:
    """Encoder rows read so far plus the per-layer recurrent carries."""

    rows: tuple = ()
    carries: tuple = ()

    def __len__(self):
        return len(self.rows)

    @property
    def H(self):
        return np.stack(self.rows) if self.rows else np.zeros((0, 0))


@dataclass
class StepOutput:
    logits: Tensor
    text_weights: np.ndarray
    visual_weights: np.ndarray | None
    state: Tensor


def _xavier(rng, fan_in, fan_out, dtype):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)


def init_params(config, seed=0, dtype=None):
    """Create the parameter dict for ``config``; names are stable across runs."""
    dtype = dtype or C.default_dtype()
    rng = np.random.default_rng(seed)
    E, H = config.emb_dim, config.hidden_dim
    p = {}

    def mat(name, fi, fo):
        p[name] = _xavier(rng, fi, fo, dtype)

    def vec(name, n, value=0.0):
        p[name] = np.full(n, value, dtype=dtype)

    def gru(prefix, n_in):
        mat(f"{prefix}.Wx", n_in, 3 * H)
        mat(f"{prefix}.Wh", H, 3 * H)
        vec(f"{prefix}.bx", 3 * H)
        vec(f"{prefix}.bh", 3 * H)

    p["src_emb"] = rng.normal(0, 0.1, size=(config.src_vocab_size, E)).astype(dtype)
    # shared between decoder input lookup and the pre-softmax projection
    p["tgt_emb"] = rng.normal(0, 0.1, size=(config.tgt_vocab_size, E)).astype(dtype)
    for layer in range(config.enc_layers):
        gru(f"enc.{layer}", E if layer == 0 else H)
    gru("dec.gru1", E)
    mat("dec.att.Wk", H, H)
    mat("dec.att.Wq", H, H)
    p["dec.att.v"] = rng.uniform(-0.1, 0.1, size=H).astype(dtype)
    gru("dec.gru2", H)
    mat("dec.Wc", H, H)
    mat("dec.Wd", H, H)
    mat("dec.Wy", E, H)
    mat("dec.Wb", H, E)
    vec("dec.bb", E)
    vec("dec.bo", config.tgt_vocab_size)
    if config.multimodal:
        mat("vis.W", config.feat_dim, H)
        vec("vis.b", H)
        vec("ln_txt.g", H, 1.0)
        vec("ln_txt.b", H)
        vec("ln_vis.g", H, 1.0)
        vec("ln_vis.b", H)
    if config.decoder_visual:
        mat("dec.vatt.Wk", H, H)
        mat("dec.vatt.Wq", H, H)
        p["dec.vatt.v"] = rng.uniform(-0.1, 0.1, size=H).astype(dtype)
    if config.variant == "ENC-OD":
        vec("ln_ground.g", H, 1.0)
        vec("ln_ground.b", H)
    return {k: Tensor(v, requires_grad=True, name=k, dtype=dtype) for k, v in p.items()}


def check_schedule(g, src_len, tgt_len):
    """Validate a per-step source-count schedule ``g(t)`` (1-based t)."""
    values = [int(g(t)) for t in range(1, tgt_len + 1)]
    if values and values[0] < 1:
        raise ScheduleError(f"schedule must read at least one token before the first write, g(1) = {values[0]}")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ScheduleError(f"schedule is not nondecreasing: {values}")
    if values and values[-1] > src_len:
        raise ScheduleError(f"schedule reads {values[-1]} tokens from a source of length {src_len}")
    return values


class TranslationModel:
    """Parameters plus the forward computations for one model variant."""

    def __init__(self, config, params=None, seed=0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)

    # visual side

    def _check_features(self, features):
        if self.config.multimodal:
            if features is None:
                raise ConfigError(f"{self.config.variant} model needs visual features")
            if features.shape[-1] != self.config.feat_dim:
                raise ConfigError(
                    f"feature dim {features.shape[-1]} does not match model feat_dim {self.config.feat_dim}")

    def project_visual(self, features, training=False, rng=None):
        """(B, R, d_v) regions -> (B, R, hidden): projection, layer norm, dropout."""
        p = self.params
        V = Tensor(features, dtype=p["vis.W"].dtype)
        Vp = C.add(C.matmul(V, p["vis.W"]), p["vis.b"])
        Vp = C.layer_norm(Vp, p["ln_vis.g"], p["ln_vis.b"])
        return C.dropout(Vp, self.config.dropout, training, rng)

    def ground_encoder(self, H, Vp):
        """Positionwise grounding: ``LayerNorm(M + H)`` with ``M = sdpa(H, Vp, Vp)``."""
        p = self.params
        M = C.scaled_dot_attention(H, Vp, Vp)
        return C.layer_norm(C.add(M, H), p["ln_ground.g"], p["ln_ground.b"])

    def memory(self, H, Vp=None, training=False, rng=None):
        """Turn raw encoder states into what the textual attention reads."""
        if not self.config.multimodal:
            return H
        p = self.params
        Hn = C.dropout(C.layer_norm(H, p["ln_txt.g"], p["ln_txt.b"]), self.config.dropout, training, rng)
        if self.config.variant == "ENC-OD":
            return self.ground_encoder(Hn, Vp)
        return Hn

    # encoder

    def _check_ids(self, ids):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.src_vocab_size):
            raise VocabularyError(f"source id outside vocabulary of size {self.config.src_vocab_size}")
        return ids

    def _layer(self, i):
        p = self.params
        return p[f"enc.{i}.Wx"], p[f"enc.{i}.Wh"], p[f"enc.{i}.bx"], p[f"enc.{i}.bh"]

    def encode(self, src):
        """One-shot encoding of a padded (B, S) id matrix into (B, S, hidden)."""
        src = self._check_ids(src)
        if src.ndim == 1:
            src = src[None]
        B, S = src.shape
        dtype = self.params["src_emb"].dtype
        carries = [Tensor(np.zeros((B, self.config.hidden_dim)), dtype=dtype) for _ in range(self.config.enc_layers)]
        rows = []
        for s in range(S):
            x = C.embedding(self.params["src_emb"], src[:, s])
            for i in range(self.config.enc_layers):
                x = carries[i] = C.gru_cell(x, carries[i], *self._layer(i))
            rows.append(x)
        return C.stack(rows, axis=1)

    def encode_extend(self, state, token_id):
        """Read one more source token. Earlier rows are shared, never recomputed."""
        if not 0 <= int(token_id) < self.config.src_vocab_size:
            raise VocabularyError(f"source id {token_id} outside vocabulary of size {self.config.src_vocab_size}")
        state = state or EncoderState()
        dtype = self.params["src_emb"].dtype
        with no_grad():
            x = C.embedding(self.params["src_emb"], np.array([int(token_id)]))
            carries = []
            for i in range(self.config.enc_layers):
                prev = state.carries[i] if state.carries else np.zeros((1, self.config.hidden_dim), dtype=dtype)
                x = C.gru_cell(x, Tensor(prev, dtype=dtype), *self._layer(i))
                carries.append(x.data)
        return EncoderState(state.rows + (x.data[0],), tuple(carries))

    # decoder

    def initial_state(self, batch_size=1):
        return Tensor(np.zeros((batch_size, self.config.hidden_dim)), dtype=self.params["src_emb"].dtype)

    def decode_step(self, state, y_prev, memory, valid_len, visual=None):
        """One conditional-GRU step.

        ``memory`` is (B, S, hidden); ``valid_len`` limits the textual
        attention to the read prefix. ``visual`` is the projected region
        tensor for DEC-* variants and must be ``None`` otherwise.
        """
        p = self.params
        memory = as_tensor(memory)
        S = memory.shape[-2]
        if np.any(np.asarray(valid_len) > S):
            raise PrefixError(f"valid_len {np.max(valid_len)} exceeds the {S} encoded source rows")
        if self.config.decoder_visual and visual is None:
            raise ConfigError(f"{self.config.variant} decoder step needs projected visual features")
        if not self.config.decoder_visual and visual is not None:
            raise ConfigError(f"{self.config.variant} decoder does not attend to visual features")
        y = C.embedding(p["tgt_emb"], np.asarray(y_prev, dtype=np.int64).reshape(-1))
        d = C.gru_cell(y, state, p["dec.gru1.Wx"], p["dec.gru1.Wh"], p["dec.gru1.bx"], p["dec.gru1.bh"])
        ctx, w_txt = C.additive_attention(memory, d, valid_len, p["dec.att.Wk"], p["dec.att.Wq"], p["dec.att.v"])
        w_vis = None
        if visual is not None:
            ctx_v, w_vis = C.additive_attention(visual, d, visual.shape[-2],
                                                p["dec.vatt.Wk"], p["dec.vatt.Wq"], p["dec.vatt.v"])
            ctx = C.add(ctx, ctx_v)
        d2 = C.gru_cell(ctx, d, p["dec.gru2.Wx"], p["dec.gru2.Wh"], p["dec.gru2.bx"], p["dec.gru2.bh"])
        o = C.tanh(C.add(C.add(C.matmul(ctx, p["dec.Wc"]), C.matmul(d2, p["dec.Wd"])), C.matmul(y, p["dec.Wy"])))
        bottleneck = C.add(C.matmul(o, p["dec.Wb"]), p["dec.bb"])
        logits = C.add(C.matmul(bottleneck, C.transpose(p["tgt_emb"])), p["dec.bo"])
        return StepOutput(logits, w_txt, w_vis, d2)

    # losses

    def _prepare(self, src, features, training, rng):
        H = self.encode(src)
        Vp = None
        if self.config.multimodal:
            self._check_features(features)
            Vp = self.project_visual(features, training, rng)
        mem = self.memory(H, Vp, training, rng)
        return mem, (Vp if self.config.decoder_visual else None)

    def batch_loss(self, batch, g, training=False, rng=None):
        """Summed token NLL of a padded batch.

        ``g(t, src_len)`` gives the number of readable source rows for each
        sample at 1-based target step ``t``. Returns ``(loss, n_tokens)``.
        """
        loss = None
        for t, out in enumerate(self._teacher_forced(batch, g, training, rng)):
            ce = C.cross_entropy(out.logits, batch.tgt_out[:, t], batch.tgt_mask[:, t])
            loss = ce if loss is None else C.add(loss, ce)
        return loss, float(batch.tgt_mask.sum())

    def _teacher_forced(self, batch, g, training, rng):
        mem, vis = self._prepare(batch.src, batch.features, training, rng)
        state = self.initial_state(len(batch))
        for t in range(batch.tgt_in.shape[1]):
            valid = np.minimum(np.asarray(g(t + 1, batch.src_len)), batch.src_len)
            out = self.decode_step(state, batch.tgt_in[:, t], mem, valid, vis)
            state = out.state
            yield out

    def teacher_forced_logits(self, sample, g):
        """(|Y|, |V_tgt|) logits of the loss computation under schedule ``g(t)``, at eval."""
        from .data import collate

        check_schedule(g, len(sample.src), len(sample.tgt))
        with no_grad():
            steps = self._teacher_forced(collate([sample]), lambda t, lens: np.array([g(t)]), False, None)
            return np.stack([out.logits.data[0] for out in steps])

    def sentence_loss(self, sample, g, rng=None, training=False):
        """Negative log-likelihood of one sample under the prefix schedule ``g(t)``.

        The full source is encoded once; step ``t`` attends to the first
        ``g(t)`` rows only, which is exact because the encoder is causal.
        """
        from .data import collate

        check_schedule(g, len(sample.src), len(sample.tgt))
        loss, _ = self.batch_loss(collate([sample]), lambda t, lens: np.array([g(t)]), training, rng)
        return loss

    # decoding

    def greedy_batch(self, sources, g, features=None, max_len=None):
        """Batched greedy decoding where step ``t`` reads ``g(t, src_len)`` rows.

        Returns emitted id lists, each ending with the end marker.
        """
        B = len(sources)
        S = max(len(s) for s in sources)
        src = np.full((B, S), PAD, dtype=np.int64)
        for b, s in enumerate(sources):
            src[b, :len(s)] = s
        src_len = np.array([len(s) for s in sources])
        limits = max_len if max_len is not None else 2 * src_len + 10
        limits = np.broadcast_to(np.asarray(limits), (B,))
        with no_grad():
            mem, vis = self._prepare(src, features, False, None)
            state = self.initial_state(B)
            y = np.full(B, BOS, dtype=np.int64)
            out = [[] for _ in range(B)]
            done = np.zeros(B, dtype=bool)
            t = 0
            while not done.all():
                t += 1
                valid = np.minimum(np.asarray(g(t, src_len)), src_len)
                step = self.decode_step(state, y, mem, valid, vis)
                state = step.state
                y = step.logits.data.argmax(axis=1)
                for b in np.flatnonzero(~done):
                    tok = int(y[b]) if t < limits[b] else EOS
                    out[b].append(tok)
                    if tok == EOS:
                        done[b] = True
        return out

    def session(self, source, features=None):
        return DecodingSession(self, source, features)


class DecodingSession:
    """Incremental single-sentence decoding state for the simultaneous policies.

    The encoder is extended lazily to however many source tokens a step asks
    for; rows computed once are reused, including rows read speculatively.
    """

    def __init__(self, model, source, features=None):
        if len(source) == 0:
            raise ConfigError("cannot decode an empty source")
        self.model = model
        self.source = list(source)
        self.src_len = len(self.source)
        self.encoder = EncoderState()
        self._memory_rows = []
        self._vp = None
        if model.config.multimodal:
            feats = None if features is None else np.asarray(features)[None]
            model._check_features(feats)
            with no_grad():
                self._vp = model.project_visual(feats)

    def _extend(self, n):
        m = self.model
        while len(self.encoder) < n:
            self.encoder = m.encode_extend(self.encoder, self.source[len(self.encoder)])
            with no_grad():
                h = Tensor(self.encoder.rows[-1][None, None, :], dtype=self.encoder.rows[-1].dtype)
                row = m.memory(h, self._vp if m.config.variant == "ENC-OD" else None)
            self._memory_rows.append(row.data[0, 0])

    def initial_state(self):
        return self.model.initial_state(1)

    def memory(self, n):
        self._extend(n)
        return np.stack(self._memory_rows[:n])

    def step(self, state, y_prev, n_read):
        """Logits for the next token given ``n_read`` source tokens; returns ``(logits, state)``."""
        if not 1 <= n_read <= self.src_len:
            raise PrefixError(f"cannot read {n_read} tokens of a {self.src_len}-token source")
        self._extend(n_read)
        mem = np.stack(self._memory_rows[:n_read])[None]
        with no_grad():
            out = self.model.decode_step(state, [y_prev], Tensor(mem, dtype=mem.dtype), n_read,
                                         self._vp if self.model.config.decoder_visual else None)
        return out.logits.data[0], out.state
