"""Run configuration: nested dataclasses with JSON round-tripping."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channel import ChannelConfig
from .errors import ConfigurationError
from .topology import GsmConfig

__all__ = [
    "PilotConfig", "NetworkConfig", "TrainConfig", "EvalConfig", "BaselineConfig",
    "RunConfig", "load_config", "desk_config",
]


@dataclass(frozen=True)
class PilotConfig:
    length: int = 8
    power: float = 1.0


@dataclass(frozen=True)
class NetworkConfig:
    expand_channels: int = 24
    branch_kernels: tuple = (7, 11)
    hidden_dims: tuple = (2048, 1024, 512)
    bn_momentum: float = 0.9


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batches_per_epoch: int = 200
    batch_size: int = 1000
    lr_init: float = 5e-4
    lr_min: float = 1e-5
    warmup_epochs: int = 10
    snr_db: float = 10.0
    feedback_bits: int = 30
    seed: int = 0
    eval_mc_samples: int = 1000
    max_grad_norm: float | None = None
    freeze_noise: bool = False

    def __post_init__(self):
        if self.lr_min > self.lr_init:
            raise ConfigurationError("lr_min must not exceed lr_init")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigurationError("warmup_epochs must lie in [0, epochs]")
        if self.epochs < 1 or self.batches_per_epoch < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs, batches_per_epoch and batch_size must be positive")
        if self.feedback_bits < 1:
            raise ConfigurationError("feedback_bits must be at least 1")


@dataclass(frozen=True)
class EvalConfig:
    test_count: int = 2000
    mc_samples: int = 1000
    seed: int = 12345
    threads: int | None = None
    snr_values: tuple = (-5.0, 0.0, 5.0, 10.0, 15.0)


@dataclass(frozen=True)
class BaselineConfig:
    grid_tx: int = 64
    grid_rx: int = 64
    sparsity: int = 16
    feedback_bits: tuple = (36,)
    clip_sigmas: float | None = 3.0
    pilot_seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    gsm: GsmConfig = field(default_factory=GsmConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    pilots: PilotConfig = field(default_factory=PilotConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def __post_init__(self):
        if (self.gsm.n_t, self.gsm.n_r) != (self.channel.n_t, self.channel.n_r):
            raise ConfigurationError("gsm and channel antenna counts disagree")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def replace(self, **sections) -> "RunConfig":
        """Copy with per-section field overrides, e.g. ``replace(train={"seed": 3})``."""
        updates = {}
        for name, changes in sections.items():
            current = getattr(self, name)
            updates[name] = dataclasses.replace(current, **changes) if isinstance(changes, dict) else changes
        return dataclasses.replace(self, **updates)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        kinds = {f.name: f.default_factory for f in dataclasses.fields(cls)}
        unknown = set(data) - set(kinds)
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        sections = {}
        for name, factory in kinds.items():
            sub = dict(data.get(name) or {})
            klass = type(factory())
            names = {f.name for f in dataclasses.fields(klass)}
            bad = set(sub) - names
            if bad:
                raise ConfigurationError(f"unknown keys in [{name}]: {sorted(bad)}")
            for key, val in sub.items():
                if isinstance(val, list):
                    sub[key] = tuple(val)
            try:
                sections[name] = klass(**sub)
            except TypeError as exc:
                raise ConfigurationError(f"[{name}]: {exc}") from exc
        return cls(**sections)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(data)


def desk_config(feedback_bits: int = 30, seed: int = 0, **train) -> RunConfig:
    """Scaled-down training protocol that runs in minutes on one CPU core."""
    opts = dict(epochs=30, batches_per_epoch=50, batch_size=128, warmup_epochs=2,
                feedback_bits=feedback_bits, seed=seed, eval_mc_samples=200)
    opts.update(train)
    return RunConfig(train=TrainConfig(**opts),
                     eval=EvalConfig(test_count=200, mc_samples=500))
