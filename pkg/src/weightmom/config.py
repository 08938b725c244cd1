"""Experiment configuration: flat key=value files with namespaced keys."""

from __future__ import annotations

from dataclasses import dataclass

from .pruner import PruneSchedule


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    seed: int = 1
    total_epochs: int = 60
    batch_size: int = 128
    lr: float = 0.05
    lr_decay: float = 0.5
    lr_decay_interval: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    window: int = 15
    momentum_mode: str = "mean"
    ema_coeff: float = 0.9
    persistence_k: int = 10
    k_min: float = 0.01
    w_avg_mode: str = "mean"
    schedule: PruneSchedule = None


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"
    data_path: str = None
    model: str = "mlp"
    hidden: tuple = (256, 128)
    densities: tuple = (0.10, 0.05, 0.02)
    seeds: tuple = (1, 2, 3)
    methods: tuple = ("weightmom", "oneshot", "random")
    total_epochs: int = 60
    batch_size: int = 128
    out_dir: str = "runs"
    lr: float = 0.05
    lr_decay: float = 0.5
    lr_decay_interval: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    window: int = 15
    persistence_k: int = 10
    momentum_mode: str = "mean"
    ema_coeff: float = 0.9
    k_min: float = 0.01
    w_avg_mode: str = "mean"
    warmup_epochs: int = 15
    interval: int = 5
    final_prune_epoch: int = 35
    power: int = 3
    checkpoint_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.densities:
            raise ConfigError("densities list must not be empty")
        for d in self.densities:
            if not 0.0 < d < 1.0:
                raise ConfigError(f"density {d} not in (0, 1)")
        if not self.seeds:
            raise ConfigError("seeds list must not be empty")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.warmup_epochs < self.window:
            raise ConfigError(
                f"warmup ({self.warmup_epochs}) must cover the magnitude "
                f"window ({self.window})")
        if not 1 <= self.persistence_k <= self.window:
            raise ConfigError("persistence_K must be in [1, window_T]")
        if self.dataset not in ("synthetic", "mnist", "cifar10", "cifar100"):
            raise ConfigError(f"unknown dataset: {self.dataset!r}")
        if self.model not in ("mlp", "smallconv"):
            raise ConfigError(f"unknown model: {self.model!r}")
        for m in self.methods:
            if m not in ("weightmom", "oneshot", "random"):
                raise ConfigError(f"unknown method: {m!r}")

    def train_config(self, seed, density):
        return TrainConfig(
            seed=seed, total_epochs=self.total_epochs, batch_size=self.batch_size,
            lr=self.lr, lr_decay=self.lr_decay,
            lr_decay_interval=self.lr_decay_interval,
            beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
            window=self.window, momentum_mode=self.momentum_mode,
            ema_coeff=self.ema_coeff, persistence_k=self.persistence_k,
            k_min=self.k_min, w_avg_mode=self.w_avg_mode,
            schedule=PruneSchedule(
                target_density=density, warmup_epochs=self.warmup_epochs,
                interval=self.interval, final_prune_epoch=self.final_prune_epoch,
                power=self.power))


def _parse_list(value, conv):
    return tuple(conv(v.strip()) for v in value.split(",") if v.strip())


# config-file key -> (attribute, converter)
_KEYS = {
    "dataset": ("dataset", str),
    "data.path": ("data_path", str),
    "model": ("model", str),
    "model.hidden": ("hidden", lambda v: _parse_list(v, int)),
    "densities": ("densities", lambda v: _parse_list(v, float)),
    "seeds": ("seeds", lambda v: _parse_list(v, int)),
    "methods": ("methods", lambda v: _parse_list(v, str)),
    "total_epochs": ("total_epochs", int),
    "batch_size": ("batch_size", int),
    "out": ("out_dir", str),
    "optimizer.lr": ("lr", float),
    "optimizer.decay": ("lr_decay", float),
    "optimizer.decay_interval": ("lr_decay_interval", int),
    "optimizer.beta1": ("beta1", float),
    "optimizer.beta2": ("beta2", float),
    "optimizer.epsilon": ("epsilon", float),
    "prune.window_T": ("window", int),
    "prune.persistence_K": ("persistence_k", int),
    "prune.momentum_mode": ("momentum_mode", str),
    "prune.ema_coeff": ("ema_coeff", float),
    "allocate.k_min": ("k_min", float),
    "allocate.w_avg_mode": ("w_avg_mode", str),
    "schedule.warmup": ("warmup_epochs", int),
    "schedule.interval_n": ("interval", int),
    "schedule.final_epoch": ("final_prune_epoch", int),
    "schedule.power": ("power", int),
    "checkpoint.every": ("checkpoint_every", int),
}


def parse_config(text):
    """Parse flat `key = value` text into an ExperimentConfig.

    Blank lines and '#' comments are ignored; unknown keys are errors.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        attr, conv = _KEYS[key]
        try:
            values[attr] = conv(value)
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {e}") from None
    return ExperimentConfig(**values)


def load_config(path):
    with open(path) as f:
        return parse_config(f.read())
