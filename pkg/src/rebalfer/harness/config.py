"""Training configuration: defaults, key-value files and overrides."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from ..attention import DISTANCES
from .transforms import TRANSFORMS


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    lam: float = 2.0
    alpha: float = 0.1
    beta: float = 0.9999
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    lr_decay_per_epoch: float = 0.9
    max_epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    enable_rac: bool = True
    enable_rsl: bool = True
    transform: str = "flip"
    consistency_distance: str = "squared"
    channels: tuple[int, ...] = (16, 32, 64)
    activation: str = "silu"
    pool: str = "avg"
    input_size: int = 32
    eval_every: int = 1

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.validate()

    def validate(self) -> None:
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0 <= self.beta < 1:
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"transform must be one of {TRANSFORMS}, got {self.transform!r}")
        if self.consistency_distance not in DISTANCES:
            raise ConfigError(f"consistency_distance must be one of {DISTANCES}")
        if self.max_epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ConfigError("max_epochs, batch_size and eval_every must be positive")
        if self.learning_rate <= 0 or not 0 < self.lr_decay_per_epoch <= 1:
            raise ConfigError("learning_rate must be > 0 and lr_decay_per_epoch in (0, 1]")

    @property
    def effective_lam(self) -> float:
        return self.lam if self.enable_rac else 0.0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        return d

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return apply_overrides(cls(), d)


_ALIASES = {"lambda": "lam"}


def _coerce(name: str, value, kind):
    if not isinstance(value, str):
        if kind == "tuple" and isinstance(value, (list, tuple)):
            return tuple(int(v) for v in value)
        return value
    v = value.strip()
    try:
        if kind == "bool":
            if v.lower() in ("1", "true", "yes", "on"):
                return True
            if v.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)
        if kind == "int":
            return int(v)
        if kind == "float":
            return float(v)
        if kind == "tuple":
            return tuple(int(x) for x in v.strip("[]()").replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return v


def _kinds() -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(TrainConfig):
        t = str(f.type)
        out[f.name] = ("bool" if t == "bool" else "int" if t == "int" else
                       "float" if t == "float" else "tuple" if t.startswith("tuple") else "str")
    return out


def apply_overrides(config: TrainConfig, overrides: dict) -> TrainConfig:
    kinds = _kinds()
    changes = {}
    for key, value in overrides.items():
        name = _ALIASES.get(key, key).replace("-", "_")
        if name not in kinds:
            raise ConfigError(f"unknown config key {key!r}")
        changes[name] = _coerce(name, value, kinds[name])
    try:
        return dataclasses.replace(config, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_key_values(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path=None, overrides: dict | None = None, base: TrainConfig | None = None) -> TrainConfig:
    """``base`` (default: TrainConfig()), then the file, then ``overrides``."""
    cfg = TrainConfig() if base is None else base
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = apply_overrides(cfg, json.loads(text) if text.lstrip().startswith("{") else parse_key_values(text))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
