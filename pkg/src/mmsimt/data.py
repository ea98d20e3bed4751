"""Corpus ingestion, vocabularies, visual feature files, batching and synthetic tasks."""

from __future__ import annotations

import hashlib
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, FormatError, IngestionError, VocabularyError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")

FEATURE_MAGIC = b"SIMTFEAT"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<8sIIII")


class Vocabulary:
    """Token/id map with ids 0..3 reserved for pad, bos, eos and unk."""

    def __init__(self, tokens=()):
        self.itos = list(SPECIALS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            self.add(tok)

    def add(self, token):
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def build(cls, sentences, min_freq=1):
        """Most frequent first; ties broken alphabetically so output is stable."""
        counts = Counter(tok for sent in sentences for tok in sent)
        ordered = sorted((t for t, c in counts.items() if c >= min_freq and t not in SPECIALS),
                         key=lambda t: (-counts[t], t))
        return cls(ordered)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, tokens, add_eos=True):
        ids = [self.stoi.get(t, UNK) for t in tokens]
        if add_eos:
            ids.append(EOS)
        return ids

    def decode(self, ids, strip=True):
        out = []
        for i in ids:
            if not 0 <= i < len(self.itos):
                raise VocabularyError(f"id {i} outside vocabulary of size {len(self.itos)}")
            if strip and i == EOS:
                break
            if strip and i in (PAD, BOS):
                continue
            out.append(self.itos[i])
        return out

    def digest(self):
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).digest()

    def save(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[:4]) != SPECIALS:
            raise FormatError(f"{path}: vocabulary must start with the reserved tokens {SPECIALS}")
        return cls(lines[4:])


@dataclass
class Sample:
    src: list
    tgt: list
    index: int = 0
    features: np.ndarray | None = None


@dataclass
class Corpus:
    samples: list
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    pair: str = "src-tgt"
    features: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def attach_features(self, features):
        features = np.asarray(features)
        if features.shape[0] != len(self.samples):
            raise AlignmentError(
                f"feature file holds {features.shape[0]} images but the corpus has {len(self.samples)} lines")
        self.features = features
        for s in self.samples:
            s.features = features[s.index]
        return self


def read_lines(path):
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for n, line in enumerate(lines, 1):
        if not line.strip():
            raise IngestionError(f"{path}: empty sentence on line {n}")
    return [line.split() for line in lines]


def read_hypotheses(path):
    """Like :func:`read_lines` but empty lines are legal (empty output)."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.split() for line in lines]


def build_vocabularies(src_path, tgt_path):
    src, tgt = read_lines(src_path), read_lines(tgt_path)
    _check_aligned(src, tgt, src_path, tgt_path)
    return Vocabulary.build(src), Vocabulary.build(tgt)


def _check_aligned(src, tgt, src_path, tgt_path):
    if len(src) != len(tgt):
        raise IngestionError(
            f"line-count mismatch: {src_path} has {len(src)} lines, {tgt_path} has {len(tgt)}")


def corpus_from_tokens(src_sents, tgt_sents, src_vocab=None, tgt_vocab=None, pair="src-tgt"):
    """Map token lists to ids. Without vocabularies this is the training split and defines them."""
    if len(src_sents) != len(tgt_sents):
        raise IngestionError(f"line-count mismatch: {len(src_sents)} source vs {len(tgt_sents)} target")
    if src_vocab is None:
        src_vocab = Vocabulary.build(src_sents)
    if tgt_vocab is None:
        tgt_vocab = Vocabulary.build(tgt_sents)
    samples = []
    for i, (s, t) in enumerate(zip(src_sents, tgt_sents)):
        if not s or not t:
            raise IngestionError(f"empty sentence at line {i + 1}")
        samples.append(Sample(src_vocab.encode(s), tgt_vocab.encode(t), index=i))
    return Corpus(samples, src_vocab, tgt_vocab, pair=pair)


def load_parallel(src_path, tgt_path, src_vocab=None, tgt_vocab=None):
    """Load line-aligned, whitespace-tokenised text files.

    Every sentence gets a trailing end-of-sequence id. Tokens outside a
    supplied vocabulary map to the unknown id.
    """
    src, tgt = read_lines(src_path), read_lines(tgt_path)
    _check_aligned(src, tgt, src_path, tgt_path)
    pair = f"{Path(src_path).suffix.lstrip('.') or 'src'}-{Path(tgt_path).suffix.lstrip('.') or 'tgt'}"
    return corpus_from_tokens(src, tgt, src_vocab, tgt_vocab, pair=pair)


def write_features(path, features):
    """Write an (n_images, n_regions, dim) array in the SIMTFEAT layout.

    4-d OC maps (n, 8, 8, 2048) are flattened to 64 region rows.
    """
    arr = np.asarray(features, dtype="<f4")
    if arr.ndim == 4:
        arr = arr.reshape(arr.shape[0], -1, arr.shape[-1])
    if arr.ndim != 3:
        raise FormatError(f"features must be (n_images, n_regions, dim), got shape {arr.shape}")
    n, r, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, r, d))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_features(path, expected_images=None):
    raw = Path(path).read_bytes()
    if len(raw) < _FEATURE_HEADER.size:
        raise FormatError(f"{path}: file shorter than the {_FEATURE_HEADER.size}-byte header")
    magic, version, n, r, d = _FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported feature format version {version}")
    expected = n * r * d * 4
    actual = len(raw) - _FEATURE_HEADER.size
    if actual != expected:
        raise FormatError(f"{path}: payload holds {actual} bytes, header implies {expected}")
    if expected_images is not None and n != expected_images:
        raise AlignmentError(f"{path}: {n} images for a corpus of {expected_images} lines")
    return np.frombuffer(raw, dtype="<f4", offset=_FEATURE_HEADER.size).reshape(n, r, d).astype(np.float32)


@dataclass
class Batch:
    indices: np.ndarray
    src: np.ndarray
    src_len: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray
    features: np.ndarray | None = None

    def __len__(self):
        return len(self.indices)


def collate(samples):
    B = len(samples)
    S = max(len(s.src) for s in samples)
    T = max(len(s.tgt) for s in samples)
    src = np.full((B, S), PAD, dtype=np.int64)
    tgt_in = np.full((B, T), PAD, dtype=np.int64)
    tgt_out = np.full((B, T), PAD, dtype=np.int64)
    mask = np.zeros((B, T), dtype=np.float64)
    for b, s in enumerate(samples):
        src[b, :len(s.src)] = s.src
        tgt_out[b, :len(s.tgt)] = s.tgt
        tgt_in[b, 0] = BOS
        tgt_in[b, 1:len(s.tgt)] = s.tgt[:-1]
        mask[b, :len(s.tgt)] = 1.0
    feats = None
    if samples[0].features is not None:
        feats = np.stack([s.features for s in samples]).astype(np.float32)
    return Batch(np.array([s.index for s in samples]), src,
                 np.array([len(s.src) for s in samples]), tgt_in, tgt_out, mask, feats)


def batch_iter(corpus, batch_size=64, seed=0, shuffle=True, bucket_batches=20):
    """Yield length-bucketed batches covering every sample exactly once.

    Samples are shuffled, sorted by source length inside pools of
    ``bucket_batches`` batches, cut into batches, and the batch order is
    shuffled again. Equal seeds give equal batch streams.
    """
    samples = list(corpus)
    if not samples:
        raise IngestionError("cannot batch an empty corpus")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples)) if shuffle else np.arange(len(samples))
    pool = batch_size * bucket_batches
    batches = []
    for start in range(0, len(order), pool):
        chunk = sorted(order[start:start + pool], key=lambda i: (len(samples[i].src), len(samples[i].tgt)))
        for b in range(0, len(chunk), batch_size):
            batches.append(chunk[b:b + batch_size])
    if shuffle:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    for idx in batches:
        yield collate([samples[i] for i in idx])


# synthetic desk-scale tasks

_COPY_TOKENS = [f"w{i}" for i in range(20)]

# (source noun, target noun, target gender)
_GENDER_ENTITIES = [
    ("man", "homme", "m"), ("boy", "garcon", "m"), ("dog", "chien", "m"), ("worker", "ouvrier", "m"),
    ("player", "joueur", "m"), ("child", "enfant", "m"),
    ("woman", "femme", "f"), ("girl", "fille", "f"), ("lady", "dame", "f"), ("cat", "chatte", "f"),
    ("dancer", "danseuse", "f"), ("singer", "chanteuse", "f"),
]
_VERBS = [("runs", "court"), ("sits", "assis"), ("jumps", "saute"), ("waits", "attend"),
          ("smiles", "sourit"), ("walks", "marche")]
_PLACES = [("outside", "dehors"), ("inside", "dedans"), ("here", "ici"), ("there", "la"),
           ("today", "aujourdhui"), ("now", "maintenant")]
_ADJECTIVES = [("white", "blanc"), ("black", "noir"), ("small", "petit"), ("red", "rouge"),
               ("old", "vieux"), ("happy", "heureux")]
_ARTICLES = {"m": "un", "f": "une"}

MASCULINE_RATE = 0.7


@dataclass
class SyntheticTask:
    kind: str
    sources: list
    targets: list
    features: np.ndarray
    labels: list = field(default_factory=list)

    def corpus(self, src_vocab=None, tgt_vocab=None):
        c = corpus_from_tokens(self.sources, self.targets, src_vocab, tgt_vocab, pair=f"synth-{self.kind}")
        return c.attach_features(self.features)


def synth_task(kind, n, seed=0, n_regions=4, dim=16):
    """Generate a desk-scale corpus with aligned visual features.

    * ``copy``: random token strings, target equals source.
    * ``reorder``: ``a <adj> <noun>`` becomes ``<art> <noun> <adj>``; one
      feature row carries the noun identity.
    * ``gender``: ``a <entity> <verb> <place>`` becomes ``<art> ...``. The
      article depends on the entity (second source token), never on the
      first; one feature row, at a random position, carries the gender.
      Exactly ``round(0.7 n)`` samples are masculine.

    ``labels`` holds the gender (``"m"``/``"f"``) for gender and reorder
    tasks, else ``None`` entries.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    feats = rng.normal(0.0, 1.0, size=(n, n_regions, dim)).astype(np.float32)
    sources, targets, labels = [], [], []
    masc = [e for e in _GENDER_ENTITIES if e[2] == "m"]
    fem = [e for e in _GENDER_ENTITIES if e[2] == "f"]
    # stratified: the masculine share is exact, only its placement is random
    n_masc = int(round(MASCULINE_RATE * n))
    genders = rng.permutation(["m"] * n_masc + ["f"] * (n - n_masc)) if kind == "gender" else None
    for i in range(n):
        if kind == "copy":
            length = int(rng.integers(3, 7))
            toks = [_COPY_TOKENS[j] for j in rng.integers(0, len(_COPY_TOKENS), size=length)]
            sources.append(toks)
            targets.append(list(toks))
            labels.append(None)
        elif kind == "gender":
            gender = str(genders[i])
            pool = masc if gender == "m" else fem
            src_noun, tgt_noun, _ = pool[int(rng.integers(len(pool)))]
            verb = _VERBS[int(rng.integers(len(_VERBS)))]
            place = _PLACES[int(rng.integers(len(_PLACES)))]
            sources.append(["a", src_noun, verb[0], place[0]])
            targets.append([_ARTICLES[gender], tgt_noun, verb[1], place[1]])
            labels.append(gender)
            row = int(rng.integers(n_regions))
            feats[i, row] = 0.0
            feats[i, row, 0] = 3.0 if gender == "f" else -3.0
            feats[i, row, 1] = 3.0
        elif kind == "reorder":
            ent = _GENDER_ENTITIES[int(rng.integers(len(_GENDER_ENTITIES)))]
            adj = _ADJECTIVES[int(rng.integers(len(_ADJECTIVES)))]
            sources.append(["a", adj[0], ent[0]])
            targets.append([_ARTICLES[ent[2]], ent[1], adj[1]])
            labels.append(ent[2])
            row = int(rng.integers(n_regions))
            feats[i, row] = 0.0
            feats[i, row, _GENDER_ENTITIES.index(ent) % dim] = 3.0
        else:
            raise ValueError(f"unknown synthetic task kind {kind!r}")
    return SyntheticTask(kind, sources, targets, feats, labels)


def write_text(path, sentences):
    Path(path).write_text("".join(" ".join(s) + "\n" for s in sentences), encoding="utf-8")
