"""Input validation shared by the estimator and the command line."""

from __future__ import annotations

import numpy as np

from .errors import AlignmentError, ConfigError, DimensionError, NumericError, UsageError
from .policies import PolicyConfig


def check_sentences(X, name="X"):
    """Return ``X`` as a list of token lists.

    Each item may be a whitespace-separated string or a sequence of string
    tokens. Empty sentences are rejected.
    """
    if isinstance(X, str):
        raise UsageError(f"{name} must be a sequence of sentences, not a single string")
    out = []
    for i, sent in enumerate(X):
        toks = sent.split() if isinstance(sent, str) else list(sent)
        if not toks:
            raise UsageError(f"{name}[{i}] is empty")
        if not all(isinstance(t, str) for t in toks):
            raise UsageError(f"{name}[{i}] must hold string tokens")
        out.append(toks)
    if not out:
        raise UsageError(f"{name} holds no sentences")
    return out


def check_parallel(X, y):
    X, y = check_sentences(X, "X"), check_sentences(y, "y")
    if len(X) != len(y):
        raise AlignmentError(f"X has {len(X)} sentences but y has {len(y)}")
    return X, y


def check_features(features, n_samples, required, feat_dim=None):
    """Validate per-sentence visual features.

    Returns a float32 ``(n, regions, dim)`` array, or ``None`` when the model
    is unimodal. 4-d global maps are flattened to region rows.
    """
    if not required:
        return None
    if features is None:
        raise ConfigError("this model variant needs visual features")
    arr = np.asarray(features, dtype=np.float32)
    if arr.ndim == 4:
        arr = arr.reshape(arr.shape[0], -1, arr.shape[-1])
    if arr.ndim != 3:
        raise DimensionError(f"features must be (n, regions, dim), got shape {arr.shape}")
    if arr.shape[0] != n_samples:
        raise AlignmentError(f"{arr.shape[0]} feature sets for {n_samples} sentences")
    if arr.shape[1] == 0:
        raise DimensionError("features hold zero regions")
    if feat_dim is not None and arr.shape[2] != feat_dim:
        raise DimensionError(f"feature dim {arr.shape[2]} does not match the model's {feat_dim}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("features contain NaN or infinite values")
    return arr


def check_policy(kind, k=1, delta=1):
    """Build a :class:`PolicyConfig`, accepting ``wait-k`` style spellings."""
    return PolicyConfig(str(kind).replace("-", "_").lower(), int(k), int(delta))
