"""Binary checkpoint format.

Layout (little-endian)::

    b"SIMTCKPT"                       magic, 8 bytes
    u32 version                       currently 1
    32 bytes                          sha256 of the model config JSON
    32 bytes, 32 bytes                sha256 of source / target vocabularies
    u32 n + n bytes                   model config JSON (utf-8)
    u32 n + n bytes                   source vocabulary, newline-joined
    u32 n + n bytes                   target vocabulary, newline-joined
    u32 n + n bytes                   free-form metadata JSON
    u32 tensor count, then per tensor:
        u16 name length, name (utf-8), u8 ndim, u32 * ndim dims,
        prod(dims) float32 values, row-major

The digests are re-checked on load.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

from .compute import Tensor
from .data import Vocabulary
from .errors import FormatError
from .model import ModelConfig, TranslationModel

MAGIC = b"SIMTCKPT"
VERSION = 1


def _blob(fh, data):
    fh.write(struct.pack("<I", len(data)))
    fh.write(data)


def _read(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"checkpoint truncated while reading {what}: wanted {n} bytes, got {len(data)}")
    return data


def _read_blob(fh, what):
    (n,) = struct.unpack("<I", _read(fh, 4, what))
    return _read(fh, n, what)


def save_checkpoint(path, model, src_vocab, tgt_vocab, meta=None):
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(hashlib.sha256(cfg).digest())
    buf.write(src_vocab.digest())
    buf.write(tgt_vocab.digest())
    _blob(buf, cfg)
    _blob(buf, "\n".join(src_vocab.itos).encode())
    _blob(buf, "\n".join(tgt_vocab.itos).encode())
    _blob(buf, json.dumps(meta or {}, sort_keys=True).encode())
    buf.write(struct.pack("<I", len(model.params)))
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name].data, dtype="<f4")
        enc = name.encode()
        buf.write(struct.pack("<H", len(enc)))
        buf.write(enc)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _vocab_from(blob):
    v = Vocabulary()
    v.itos = blob.decode().split("\n")
    v.stoi = {t: i for i, t in enumerate(v.itos)}
    return v


def load_checkpoint(path):
    """Returns ``(model, src_vocab, tgt_vocab, meta)``."""
    with open(path, "rb") as fh:
        if _read(fh, 8, "magic") != MAGIC:
            raise FormatError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read(fh, 4, "version"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        cfg_digest = _read(fh, 32, "config digest")
        src_digest = _read(fh, 32, "vocabulary digest")
        tgt_digest = _read(fh, 32, "vocabulary digest")
        cfg = _read_blob(fh, "config")
        src_vocab = _vocab_from(_read_blob(fh, "source vocabulary"))
        tgt_vocab = _vocab_from(_read_blob(fh, "target vocabulary"))
        meta = json.loads(_read_blob(fh, "metadata"))
        if hashlib.sha256(cfg).digest() != cfg_digest:
            raise FormatError(f"{path}: config digest mismatch")
        if src_vocab.digest() != src_digest or tgt_vocab.digest() != tgt_digest:
            raise FormatError(f"{path}: vocabulary digest mismatch")
        (count,) = struct.unpack("<I", _read(fh, 4, "tensor count"))
        params = {}
        for _ in range(count):
            (n,) = struct.unpack("<H", _read(fh, 2, "tensor name"))
            name = _read(fh, n, "tensor name").decode()
            (ndim,) = struct.unpack("<B", _read(fh, 1, "tensor rank"))
            shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim, "tensor shape"))
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read(fh, 4 * size, f"tensor {name}"), dtype="<f4").reshape(shape)
            params[name] = Tensor(data.astype(np.float32), requires_grad=True, name=name, dtype=np.float32)
    config = ModelConfig(**json.loads(cfg))
    return TranslationModel(config, params), src_vocab, tgt_vocab, meta
