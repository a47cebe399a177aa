"""JSON experiment configuration.

Schema (every key optional; defaults are the deep sigmoid MLP protocol)::

    {
      "epochs": 100, "batch_size": 128,
      "lr": 0.1, "lr_decay": 0.95, "lr_decay_every": 1, "lr_floor": 0.001,
      "momentum": 0.9, "weight_decay": 0.0001,
      "seed": 0, "init": "minibatch_rescale" | "glorot_uniform",
      "augment": false,
      "model": {
        "depth": 51, "width": 256, "activation": "sigmoid" | "relu",
        "lcw": true, "batchnorm": false, "bn_position": "pre" | "post",
        "bn_eps": 1e-5, "bn_momentum": 0.1,
        "layers": null            # or an explicit layer list, see build_model
      },
      "data": {
        "kind": "synthetic" | "cifar10" | "cifar100",
        "root": null,             # CIFAR directory; falls back to $LCWNET_DATA_ROOT
        "test_fraction": 0.2,     # synthetic only
        "synthetic": {"classes": 10, "dim": 128, "samples_per_class": 500,
                      "separation": 4.0, "noise": 1.0}
      },
      "output_dir": null
    }

``depth`` counts dense layers including the output layer, so a network with
50 hidden layers has ``depth = 51``.

Explicit layer lists use entries such as ``{"type": "conv2d", "out": 16,
"kernel": 3, "stride": 1, "padding": 1, "lcw": true}``, ``{"type": "dense",
"out": 10, "lcw": false}``, ``{"type": "batchnorm"}``, ``{"type": "relu"}``,
``{"type": "sigmoid"}`` and ``{"type": "flatten"}``; input sizes are
inferred.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import SyntheticSpec
from .init import SCHEMES


class ConfigError(ValueError):
    pass


@dataclass
class ModelSpec:
    depth: int = 51
    width: int = 256
    activation: str = "sigmoid"
    lcw: bool = True
    batchnorm: bool = False
    bn_position: str = "pre"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    layers: list | None = None


@dataclass
class DataSpec:
    kind: str = "synthetic"
    root: str | None = None
    test_fraction: float = 0.2
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.1
    lr_decay: float = 0.95
    lr_decay_every: int = 1
    lr_floor: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    init: str = "minibatch_rescale"
    augment: bool = False
    model: ModelSpec = field(default_factory=ModelSpec)
    data: DataSpec = field(default_factory=DataSpec)
    output_dir: str | None = None

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr_decay_every < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1 and lr_decay_every >= 1 required")
        for name in ("lr", "lr_decay", "lr_floor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("momentum and weight_decay must be non-negative")
        if self.init not in SCHEMES:
            raise ConfigError(f"init must be one of {SCHEMES}, got {self.init!r}")
        uses_bn = self.model.batchnorm or any(
            l.get("type") == "batchnorm" for l in (self.model.layers or [])
        )
        if uses_bn and self.batch_size < 2:
            raise ConfigError("batch norm needs batch_size >= 2")
        if self.data.kind not in ("synthetic", "cifar10", "cifar100"):
            raise ConfigError(f"unknown data kind {self.data.kind!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    nested = {"model": ModelSpec, "data": DataSpec, "synthetic": SyntheticSpec}
    for key, value in raw.items():
        if key in nested and isinstance(value, dict):
            value = _build(nested[key], value, f"{where}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: dict) -> TrainConfig:
    return _build(TrainConfig, raw, "config").validate()


def load_config(path) -> TrainConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)
