"""Named hyperparameter presets and run-config resolution.

Precedence when building a :class:`RunConfig`: explicit overrides (CLI
flags) > config file > preset > dataclass defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .decode import DecodeConfig
from .features import Task
from .model.network import EncoderConfig
from .model.training import TrainConfig

_FULL_SCALE_TRAIN = {"batch_size": 4, "epochs": 3, "learning_rate": 2e-5, "weight_decay": 0.01,
                     "lr_schedule": "linear_decay", "optimizer": "adamw"}

PRESETS: dict[str, dict] = {
    # small dims and lengths so synthetic runs take seconds on one core
    "desk": {
        "encoder": {"embedding_dim": 64, "hidden_dim": 64, "max_len": 64, "stride": 16, "dropout_rate": 0.1},
        "train": {"batch_size": 16, "epochs": 3, "learning_rate": 5e-3, "weight_decay": 0.01},
    },
    "desk-crf": {
        "head": "CRF",
        "encoder": {"embedding_dim": 64, "hidden_dim": 64, "max_len": 64, "stride": 16, "dropout_rate": 0.2},
        "train": {"batch_size": 16, "epochs": 3, "learning_rate": 5e-3, "weight_decay": 0.01},
    },
    "paper-tc": {"head": "TC", "encoder": {"max_len": 384, "stride": 128}, "train": _FULL_SCALE_TRAIN},
    "paper-sp": {"head": "SP", "encoder": {"max_len": 384, "stride": 128}, "train": _FULL_SCALE_TRAIN},
    "paper-msp": {"head": "MSP", "encoder": {"max_len": 384, "stride": 128}, "train": _FULL_SCALE_TRAIN},
    "paper-sptc": {"head": "SPTC", "encoder": {"max_len": 512, "stride": 128}, "train": _FULL_SCALE_TRAIN},
    "paper-crf": {"head": "CRF", "encoder": {"max_len": 384, "stride": 128, "dropout_rate": 0.2},
                  "train": _FULL_SCALE_TRAIN},
    "rnnsl": {
        "head": "WORD",
        "encoder": {"embedding_dim": 200, "hidden_dim": 200, "max_len": 192, "stride": 64, "dropout_rate": 0.1},
        "train": {"batch_size": 32, "epochs": 30, "learning_rate": 1e-3, "weight_decay": 0.0,
                  "optimizer": "adam", "lr_schedule": "constant", "early_stopping_patience": 3},
    },
}


@dataclass
class RunConfig:
    head: Task = Task.TC
    preset: str = "desk"
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    paths: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"head": self.head.value, "preset": self.preset, "seed": self.seed,
                "encoder": asdict(self.encoder), "train": asdict(self.train), "decode": asdict(self.decode),
                "paths": dict(self.paths)}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _build(cls, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**values)


def resolve_config(preset: str | None = None, config_file: str | os.PathLike | None = None,
                   overrides: dict | None = None) -> RunConfig:
    layers: dict = {}
    file_cfg = json.loads(Path(config_file).read_text(encoding="utf-8")) if config_file else {}
    overrides = overrides or {}
    name = overrides.get("preset") or file_cfg.get("preset") or preset or "desk"
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    for layer in (PRESETS[name], file_cfg, overrides):
        layers = _merge(layers, layer)
    seed = int(layers.get("seed", 0))
    enc = _build(EncoderConfig, {**layers.get("encoder", {}), "seed": seed})
    return RunConfig(
        head=Task(layers.get("head", "TC")),
        preset=name,
        seed=seed,
        encoder=enc,
        train=_build(TrainConfig, layers.get("train", {})),
        decode=_build(DecodeConfig, layers.get("decode", {})),
        paths=dict(layers.get("paths", {})),
    )


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, seed=seed, encoder=replace(cfg.encoder, seed=seed))
