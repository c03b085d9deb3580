"""Flat ``key = value`` run configuration with ``paper`` and ``desk`` presets."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .losses import LossConfig
from .model import ModelDims
from .sampler import SamplingStrategy
from .trainer import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    preset: str = "desk"
    seed: int = 0
    splits: str = ""
    out: str = "runs/default"
    threads: int = 1
    # model
    d: int = 64
    heads: int = 4
    blocks: int = 1
    L_max: int = 10
    # training
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 128
    warmup_ratio: float = 0.1
    dropout: float = 0.2
    loss: str = "ce_lpo"
    grad_clip: float = 0.0
    dtype: str = "float32"
    # loss
    lam: float = 0.5
    tau: float = 0.1
    alpha_T: float = 1.0
    alpha_H: float = 0.0
    dpo_beta: float = 1.0
    # sampler
    sampler_kind: str = "adaptive_gumbel"
    sampler_k: int = 10
    gumbel_scale: float = 1.0

    def dims(self, num_items):
        return ModelDims(num_items, d=self.d, heads=self.heads, blocks=self.blocks, L_max=self.L_max)

    def train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate, epochs=self.epochs, batch_size=self.batch_size,
            warmup_ratio=self.warmup_ratio, dropout_p=self.dropout, seed=self.seed, loss=self.loss,
            loss_config=LossConfig(self.lam, self.tau, self.alpha_T, self.alpha_H, self.dpo_beta),
            sampler=SamplingStrategy(self.sampler_kind, self.sampler_k, self.gumbel_scale),
            grad_clip=self.grad_clip or None, dtype=self.dtype,
        )

    def replace(self, **changes):
        return resolve({**self.as_dict(), **changes}, validate_keys=False)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dump(self):
        """Every field as ``dotted.key = value``, in declaration order."""
        return "".join(f"{KEY_OF[name]} = {value}\n" for name, value in self.as_dict().items())


# dotted file key -> field name
KEYS = {
    "preset": "preset", "seed": "seed", "data.splits": "splits", "out": "out", "threads": "threads",
    "model.d": "d", "model.heads": "heads", "model.blocks": "blocks", "model.L_max": "L_max",
    "train.lr": "learning_rate", "train.epochs": "epochs", "train.batch_size": "batch_size",
    "train.warmup_ratio": "warmup_ratio", "train.dropout": "dropout", "train.loss": "loss",
    "train.grad_clip": "grad_clip", "train.dtype": "dtype",
    "loss.lambda": "lam", "loss.tau": "tau", "loss.alpha_T": "alpha_T", "loss.alpha_H": "alpha_H",
    "loss.dpo_beta": "dpo_beta",
    "sampler.kind": "sampler_kind", "sampler.k": "sampler_k", "sampler.gumbel_scale": "gumbel_scale",
}
KEY_OF = {v: k for k, v in KEYS.items()}

PRESETS = {
    "desk": {},
    "paper": {"d": 768, "heads": 16, "blocks": 1, "learning_rate": 5e-4, "batch_size": 128,
              "lam": 0.5, "tau": 0.1, "dropout": 0.8, "warmup_ratio": 0.1},
}


def _coerce(name, raw):
    kind = type(getattr(RunConfig, name))
    try:
        return kind(raw) if kind is not int else int(str(raw), 10)
    except (TypeError, ValueError):
        raise ConfigError(f"{KEY_OF[name]}: cannot parse {raw!r} as {kind.__name__}") from None


def resolve(values=None, validate_keys=True):
    """defaults <- preset <- ``values`` (field names or dotted keys)."""
    values = dict(values or {})
    named = {}
    for key, raw in values.items():
        name = KEYS.get(key, key)
        if name not in KEY_OF:
            raise ConfigError(f"unknown config key {key!r}")
        named[name] = raw
    preset = named.get("preset", RunConfig.preset)
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    merged = {**PRESETS[preset], **named}
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    cfg.train_config()  # validates ranges
    cfg.dims(1)
    return cfg


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = raw
    return values


def load_config(path=None, overrides=None):
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "threads" not in values and os.environ.get("LPO_REC_THREADS"):
        values["threads"] = os.environ["LPO_REC_THREADS"]
    return resolve(values)
