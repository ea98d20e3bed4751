"""Run configuration and the ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .model import VARIANTS


@dataclass
class RunConfig:
    variant: str = "UNI"
    policy: str = "consecutive"  # training schedule: consecutive or wait_k
    k: int = 1
    emb_dim: int = 200
    hidden_dim: int = 320
    lr: float = 0.0004
    batch_size: int = 64
    weight_decay: float = 1e-5
    clip: float = 1.0
    dropout: float = 0.5
    max_epochs: int = 50
    patience: int = 10
    lr_patience: int = 2
    seed: int = 0
    train_src: str | None = None
    train_tgt: str | None = None
    dev_src: str | None = None
    dev_tgt: str | None = None
    train_features: str | None = None
    dev_features: str | None = None
    src_vocab: str | None = None
    tgt_vocab: str | None = None
    output: str = "model.ckpt"
    log: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.policy not in ("consecutive", "wait_k"):
            raise ConfigError(f"training policy must be consecutive or wait_k, got {self.policy!r}")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        for name in ("emb_dim", "hidden_dim", "batch_size", "max_epochs", "patience", "lr_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.lr <= 0 or self.clip <= 0:
            raise ConfigError("lr and clip must be positive")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _coerce(field, raw):
    kind = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", str(field.type))
    if raw.lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{field.name}: cannot parse {raw!r} as {kind.split(' ')[0]}") from None
    return raw


PATH_KEYS = ("train_src", "train_tgt", "dev_src", "dev_tgt", "train_features", "dev_features",
             "src_vocab", "tgt_vocab", "output", "log")


def parse_values(text, base_dir=None):
    """Parse ``key = value`` lines (``#`` starts a comment) into typed values.

    Relative paths are resolved against ``base_dir`` when given.
    """
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in fields:
            raise ConfigError(f"config line {n}: unknown key {key!r}")
        values[key] = _coerce(fields[key], raw)
    if base_dir is not None:
        for key in PATH_KEYS:
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(Path(base_dir) / values[key])
    return values


def parse_config(text, base_dir=None):
    return RunConfig(**parse_values(text, base_dir))


def load_config(path, overrides=()):
    """Read a config file; ``overrides`` are extra ``key=value`` strings applied last."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    values = parse_values(path.read_text(encoding="utf-8"), base_dir=path.parent)
    values.update(parse_values("\n".join(overrides)))
    return RunConfig(**values)


def dump_config(config):
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(config, f.name)
        if v is not None:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
