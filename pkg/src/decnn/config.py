"""Training configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from . import data, model, optim
from .errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    # model
    k: int = 2
    channels: int = 128
    in_slices: int = 3
    pre_layers: int = 5
    kernel: int = 3
    # optimizer and loss
    lr: float = optim.LR
    beta1: float = optim.BETA1
    beta2: float = optim.BETA2
    eps: float = optim.EPS
    batch: int = data.BATCH
    beta: float = model.BETA
    alpha: float = model.ALPHA
    # schedule and data
    epochs: int = 10
    seed: int = 0
    patch: int = data.PATCH
    stride: int = data.STRIDE
    axial_stride: int = 1
    flip: bool = True

    def __post_init__(self):
        self.model_config()  # validates model fields
        for name in ("batch", "patch", "stride", "axial_stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")

    def model_config(self) -> model.ModelConfig:
        return model.ModelConfig(self.k, self.channels, self.in_slices, self.pre_layers, self.kernel)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = FIELD_TYPES[key]
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Defaults, then the file, then ``overrides`` (entries set to None are ignored)."""
    values = parse_config_text(Path(path).read_text()) if path else {}
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return TrainConfig(**values)


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
