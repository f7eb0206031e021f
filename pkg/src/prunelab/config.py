"""Experiment configuration files (TOML), validated strictly.

Unknown keys anywhere in the document are an error, so a typo never falls
back silently to a default. A minimal file::

    name = "desk"
    methods = ["imp", "snip", "synflow", "drive"]
    sparsities = [0.98]
    seeds = [0, 1, 2]
    total_epochs = 6

    [model]
    kind = "mlp"
    sizes = [784, 300, 100, 10]

    [dataset]
    kind = "synthetic"
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .nn import ModelSpec, conv_spec, mlp_spec
from .optim import Constant, CosineAnnealing, StepDecay, TrainConfig

METHODS = ("imp", "snip", "synflow", "drive")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "mlp"  # "mlp" or "conv"
    sizes: tuple = (784, 300, 100, 10)
    bias: bool = True
    input_shape: tuple = (1, 28, 28)
    channels: tuple = (8, 16)
    kernel: int = 3
    num_classes: int = 10

    def build_spec(self) -> ModelSpec:
        if self.kind == "mlp":
            return mlp_spec(tuple(self.sizes), self.bias)
        if self.kind == "conv":
            return conv_spec(tuple(self.input_shape), tuple(self.channels), self.num_classes, self.kernel)
        raise ConfigError(f"model.kind must be 'mlp' or 'conv', got {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "mlp":
            return "mlp-" + "-".join(str(s) for s in self.sizes)
        return "conv-" + "-".join(str(c) for c in self.channels)


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"  # "synthetic" or "idx"
    # synthetic clusters
    classes: int = 10
    dim: int = 784
    per_class: int = 6000
    test_per_class: int = 1000
    separation: float = 6.0
    informative: Optional[int] = None
    seed: int = 0
    # IDX files
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    num_classes: int = 10

    @property
    def label(self) -> str:
        if self.kind == "idx":
            return Path(self.train_images).stem or "idx"
        return f"gauss{self.classes}x{self.dim}"


@dataclass(frozen=True)
class PruneConfig:
    iterations: int = 100
    drive_pretrain_epochs: int = 1
    imp_cycles: int = 5
    imp_epochs_per_cycle: int = 1


@dataclass(frozen=True)
class TrainSection:
    optimizer: str = "sgd"
    lr: float = 0.01
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 128
    schedule: str = "constant"  # "constant", "step" or "cosine"
    step_factor: float = 5.0
    step_every: int = 0
    milestones: tuple = ()

    def to_train_config(self) -> TrainConfig:
        if self.schedule == "constant":
            sched = Constant(self.lr)
        elif self.schedule == "step":
            sched = StepDecay(self.lr, self.step_factor, self.step_every or None, tuple(self.milestones))
        elif self.schedule == "cosine":
            sched = CosineAnnealing(self.lr)
        else:
            raise ConfigError(f"train.schedule must be constant, step or cosine, got {self.schedule!r}")
        return TrainConfig(self.optimizer, sched, self.momentum, self.beta1, self.beta2, self.epsilon,
                           self.batch_size)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    methods: tuple = METHODS
    sparsities: tuple = (0.9,)
    seeds: tuple = (0,)
    total_epochs: int = 6
    out_dir: str = "runs"
    workers: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    train: TrainSection = field(default_factory=TrainSection)

    def validate(self) -> "ExperimentConfig":
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if not self.methods or not self.sparsities or not self.seeds:
            raise ConfigError("methods, sparsities and seeds must be non-empty")
        for k in self.sparsities:
            if not 0.0 <= k < 1.0:
                raise ConfigError(f"sparsity {k} outside [0, 1)")
        if self.total_epochs < 1:
            raise ConfigError("total_epochs must be >= 1")
        if "drive" in self.methods and not 0 <= self.prune.drive_pretrain_epochs < self.total_epochs:
            raise ConfigError("prune.drive_pretrain_epochs must lie in [0, total_epochs)")
        if self.prune.iterations < 1 or self.prune.imp_cycles < 1:
            raise ConfigError("prune.iterations and prune.imp_cycles must be >= 1")
        if self.train.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"train.optimizer must be sgd or adam, got {self.train.optimizer!r}")
        if self.dataset.kind not in ("synthetic", "idx"):
            raise ConfigError(f"dataset.kind must be synthetic or idx, got {self.dataset.kind!r}")
        spec = self.model.build_spec()
        spec.validate()
        d = self.dataset
        if d.kind == "synthetic":
            if math.prod(spec.input_shape) != d.dim:
                raise ConfigError(f"model input {spec.input_shape} does not match dataset.dim = {d.dim}")
            if spec.num_classes != d.classes:
                raise ConfigError(f"model has {spec.num_classes} outputs but dataset.classes = {d.classes}")
        elif spec.num_classes != d.num_classes:
            raise ConfigError(f"model has {spec.num_classes} outputs but dataset.num_classes = {d.num_classes}")
        return self


_SECTIONS = {"model": ModelConfig, "dataset": DatasetConfig, "prune": PruneConfig, "train": TrainSection}


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where or 'top level'} must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS and not where:
            value = _build(_SECTIONS[key], value, key)
        elif isinstance(value, list):
            value = tuple(value)
        elif isinstance(value, dict):
            raise ConfigError(f"unexpected table {where + '.' if where else ''}{key}")
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(raw: dict) -> ExperimentConfig:
    try:
        cfg = _build(ExperimentConfig, raw, "")
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def clean(v):
        if isinstance(v, tuple):
            return [clean(x) for x in v]
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items() if x is not None}
        return v

    return clean(dataclasses.asdict(cfg))
