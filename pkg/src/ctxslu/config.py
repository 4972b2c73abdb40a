"""Nested dataclass configs loaded from YAML with ``key.sub=value`` overrides.

Precedence: command-line overrides > config file > dataclass defaults.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .nlu import NluConfig
from .transducer import AsrConfig

SCHEMES = ("NoContext", "SpeechEncoder", "AsrNluInterface", "SharedContext")


@dataclass
class ModelConfig:
    scheme: str = "NoContext"
    combiner: str | None = None
    context_sources: str = "both"  # "both", "da" (acts only) or "utt" (previous utterances only)
    variant: str = "rnnt"  # "rnnt": LSTM encoder + BiLSTM tagger; "tt": self-attention for both
    d: int = 32
    heads: int = 4
    l_a: int = 5
    l_b: int = 5
    masked_average: bool = False
    per_key_gate: bool = False
    frame_scale: float = 13.856406460551018  # sqrt(192): unit per-dimension scale for unit-norm frames
    asr: AsrConfig = field(default_factory=AsrConfig)
    nlu: NluConfig = field(default_factory=NluConfig)
    seed: int = 0

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "NoContext" and self.combiner is not None:
            raise ConfigError("NoContext takes no combiner")
        if self.scheme != "NoContext" and self.combiner not in ("AvC", "AttC", "GAttC"):
            raise ConfigError(f"{self.scheme} needs a combiner (AvC, AttC or GAttC), got {self.combiner!r}")
        if self.context_sources not in ("both", "da", "utt"):
            raise ConfigError(f"bad context_sources {self.context_sources!r}")
        if self.variant not in ("rnnt", "tt"):
            raise ConfigError(f"variant must be rnnt or tt, got {self.variant!r}")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")


@dataclass
class TrainConfig:
    stage_steps: tuple[int, int, int] = (1000, 500, 1000)
    batch: int = 8
    peak_lr: float = 1e-2
    stage_lr: tuple[float, float, float] | None = None  # per-stage peak lr; overrides peak_lr
    warmup: int = 100
    hold: int = 400
    final_lr: float = 1e-5
    lambdas: tuple[float, float, float] = (1.0, 1.0, 1.0)
    clip: float = 5.0
    seed: int = 0
    stage2_freeze: tuple[str, ...] = ("asr.",)


@dataclass
class DataConfig:
    dir: str = "runs/data"
    vocab_size: int = 200


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs/train"


def _convert(tp, value, where):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return from_dict(tp, value, where)
    if origin in (typing.Union, types.UnionType):
        if value is None:
            return None
        (inner,) = [a for a in typing.get_args(tp) if a is not type(None)] or [object]
        return _convert(inner, value, where)
    if origin is tuple:
        args = typing.get_args(tp)
        if args and args[-1] is not Ellipsis:
            return tuple(_convert(a, v, where) for a, v in zip(args, value))
        return tuple(_convert(args[0], v, where) for v in value) if args else tuple(value)
    if tp is float and isinstance(value, (int, str)):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    return value


def from_dict(cls, d: dict, where: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown config keys at {where or 'top level'}: {sorted(unknown)}")
    kwargs = {k: _convert(hints[k], v, f"{where}.{k}".lstrip(".")) for k, v in d.items()}
    return cls(**kwargs)


def to_dict(obj) -> dict:
    def clean(v):
        if isinstance(v, tuple):
            return [clean(x) for x in v]
        if isinstance(v, list):
            return [clean(x) for x in v]
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        return v

    return clean(dataclasses.asdict(obj))


def parse_overrides(items) -> dict:
    """``["train.batch=4", "model.scheme=SpeechEncoder"]`` -> nested dict."""
    out: dict = {}
    for item in items:
        item = item[2:] if item.startswith("--") else item
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw) if raw != "" else None
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def deep_merge(base: dict, extra: dict) -> dict:
    merged = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = deep_merge(merged[k], v)
        else:
            merged[k] = v
    return merged


def load_config(cls, path=None, overrides=()):
    raw: dict = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    raw = deep_merge(raw, parse_overrides(overrides))
    return from_dict(cls, raw)


def dump_yaml(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(to_dict(obj) if dataclasses.is_dataclass(obj) else obj, fh, sort_keys=False)
