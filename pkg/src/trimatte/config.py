"""Run configuration: dataclasses, ``key = value`` config files and dotted overrides."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_type_hints

from .errors import ConfigError
from .losses import LossWeights
from .model import ModelConfig


@dataclass
class LossConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    lap_levels: int = 5
    unknown_only: bool = True


@dataclass
class OptimConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_frac: float = 0.02
    min_lr: float = 0.0


@dataclass
class DataConfig:
    manifest: str = ""          # empty -> synthetic corpus
    split: str = "train"
    synth_n: int = 8
    synth_size: int = 64
    synth_seed: int = 0
    tt_ratio: float = 0.3
    crop: int = 64


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    seed: int = 0
    checkpoint_every: int = 0   # 0 -> only the final checkpoint
    log_every: int = 100


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        try:
            self.model.validate()
            LossWeights(**dataclasses.asdict(self.loss.weights))
        except (ValueError, ConfigError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.optim.lr < 0:
            raise ConfigError("optim.lr must be >= 0")
        if not 0 <= self.optim.warmup_frac < 1:
            raise ConfigError("optim.warmup_frac must be in [0, 1)")
        if self.train.steps < 0 or self.train.batch_size < 1:
            raise ConfigError("train.steps must be >= 0 and train.batch_size >= 1")
        mult = self.model.encoder.input_multiple
        if self.data.crop <= 0 or self.data.crop % mult:
            raise ConfigError(f"data.crop must be a positive multiple of {mult}")
        if not self.data.manifest and self.data.synth_size % mult:
            raise ConfigError(f"data.synth_size must be a multiple of {mult}")
        if not self.data.manifest and self.data.crop > self.data.synth_size:
            raise ConfigError("data.crop larger than data.synth_size")
        if self.loss.lap_levels < 1 or self.data.crop % (2 ** self.loss.lap_levels):
            raise ConfigError(f"data.crop must be divisible by 2^loss.lap_levels")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        for key, value in _flatten(d).items():
            set_value(cfg, key, value, parse=False)
        return cfg


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flatten(v, f"{prefix}{k}."))
        else:
            out[f"{prefix}{k}"] = v
    return out


def _parse(text: str, kind) -> Any:
    text = text.strip()
    origin = getattr(kind, "__origin__", None)
    if origin is list:
        (item,) = kind.__args__
        return [_parse(t, item) for t in text.replace("[", "").replace("]", "").split(",") if t.strip()]
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def set_value(cfg, dotted: str, value, parse: bool = True) -> None:
    """Assign ``a.b.c = value`` on nested dataclasses, parsing strings to the field type."""
    parts = dotted.split(".")
    obj = cfg
    for p in parts[:-1]:
        if not dataclasses.is_dataclass(obj) or not hasattr(obj, p):
            raise ConfigError(f"unknown config key '{dotted}'")
        obj = getattr(obj, p)
    name = parts[-1]
    fields = {f.name for f in dataclasses.fields(obj)} if dataclasses.is_dataclass(obj) else set()
    if name not in fields:
        raise ConfigError(f"unknown config key '{dotted}'")
    kind = get_type_hints(type(obj))[name]
    if parse and isinstance(value, str):
        try:
            value = _parse(value, kind)
        except ValueError as exc:
            raise ConfigError(f"{dotted}: {exc}") from exc
    setattr(obj, name, value)


def load_config(path: str | os.PathLike | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then ``key = value`` lines from ``path``, then ``key=value`` overrides."""
    cfg = RunConfig()
    if path:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        for lineno, line in enumerate(lines, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            set_value(cfg, key.strip(), value)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        set_value(cfg, key.strip(), value)
    cfg.validate()
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in _flatten(cfg.to_dict()).items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
