"""Run configuration: one JSON document, nested dataclasses, dotted overrides."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .autoencoder import EncoderSpec


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


@dataclass
class LossWeights:
    motion: float = 0.6
    separation: float = 0.01
    adversarial: float = 0.05

    def validate(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ConfigError(f"loss weight {k} must be non-negative")


@dataclass
class AblationConfig:
    use_appearance_stream: bool = True
    use_motion_stream: bool = True
    use_spatial_memory: bool = True
    use_temporal_memory: bool = True
    use_L_a: bool = True
    use_L_m: bool = True
    use_L_r: bool = True
    use_L_adv: bool = True

    def validate(self):
        if not (self.use_appearance_stream or self.use_motion_stream):
            raise ConfigError("at least one stream must be enabled")
        if self.use_spatial_memory and not self.use_appearance_stream:
            raise ConfigError("spatial memory requires the appearance stream")
        if self.use_temporal_memory and not self.use_motion_stream:
            raise ConfigError("temporal memory requires the motion stream")
        if self.use_L_a and not self.use_appearance_stream:
            raise ConfigError("L_a requires the appearance stream")
        if self.use_L_r and not (self.use_spatial_memory or self.use_temporal_memory):
            raise ConfigError("L_r requires at least one memory pool")
        if not (self.use_L_a or self.use_L_m):
            raise ConfigError("at least one of L_a / L_m must train the predictor")

    @classmethod
    def row(cls, model: int) -> "AblationConfig":
        """Switch pattern of ablation row ``model`` (1-8)."""
        try:
            on = ABLATION_ROWS[model]
        except KeyError:
            raise ConfigError(f"no ablation row {model}") from None
        return cls(**{f.name: f.name in on for f in dataclasses.fields(cls)})


_A, _MS, _M, _MT = "use_appearance_stream", "use_spatial_memory", "use_motion_stream", "use_temporal_memory"
_LA, _LM, _LR, _LADV = "use_L_a", "use_L_m", "use_L_r", "use_L_adv"
ABLATION_ROWS: dict[int, frozenset[str]] = {
    1: frozenset({_A, _MS, _LA, _LR, _LADV}),
    2: frozenset({_M, _MT, _LM, _LR, _LADV}),
    3: frozenset({_A, _M, _LA, _LM, _LADV}),
    4: frozenset({_A, _MS, _M, _MT, _LA, _LM, _LR, _LADV}),
    5: frozenset({_A, _MS, _M, _MT, _LA, _LR}),
    6: frozenset({_A, _MS, _M, _MT, _LA, _LM, _LR}),
    7: frozenset({_A, _MS, _M, _MT, _LA, _LR, _LADV}),
    8: frozenset({_A, _MS, _M, _MT, _LA, _LM, _LADV}),
}


@dataclass
class TrainSchedule:
    batch_size: int = 8
    lr: float = 4e-4
    lr_min: float = 0.0
    pretrain_epochs: int = 20
    main_epochs: int = 60
    noise_fraction: float = 0.2
    betas: tuple[float, float] = (0.9, 0.999)

    def validate(self):
        if self.batch_size < 1 or self.lr <= 0 or self.pretrain_epochs < 0 or self.main_epochs < 0:
            raise ConfigError("invalid schedule values")
        if not 0 <= self.noise_fraction <= 1:
            raise ConfigError("noise_fraction must lie in [0, 1]")


@dataclass
class ModelConfig:
    k_in: int = 4
    resolution: int = 64
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    memory_items: int = 32
    k_top: int | None = 8  # None: no top-k constraint
    disc_channels: tuple[int, ...] = (32, 64, 128)

    def validate(self):
        if self.k_in < 2:
            raise ConfigError("k_in must be >= 2 for motion inputs")
        if self.resolution % self.encoder.downsampling:
            raise ConfigError(f"resolution {self.resolution} not divisible by {self.encoder.downsampling}")
        if self.memory_items < 2:
            raise ConfigError("memory_items must be >= 2")
        if self.k_top is not None and self.k_top < 1:
            raise ConfigError("k_top must be >= 1 or null")


@dataclass
class FlowConfig:
    input_provider: str = "farneback"  # motion encoder inputs / pretrain targets
    loss_provider: str = "difference"  # motion loss, needs gradients


@dataclass
class DataConfig:
    train_root: str = "data/synthetic/train"
    test_root: str = "data/synthetic/test"
    flow_cache: str | None = None  # defaults to <run_dir>/flows
    frames_dir: str = "frames"
    labels_dir: str = "labels"
    frame_glob: str = "*.png"
    label_suffix: str = ".txt"


@dataclass
class EvalConfig:
    normalization: str = "per-video"
    batch_size: int = 32
    error_maps: int = 0  # maps exported per video (frames with the highest anomaly score)

    def validate(self):
        if self.normalization not in ("per-video", "global"):
            raise ConfigError("normalization must be 'per-video' or 'global'")


@dataclass
class SweepConfig:
    memory_items: list[int] = field(default_factory=lambda: [8, 16, 32])
    k_top: list[int] = field(default_factory=lambda: [2, 4, 8])
    include_unconstrained: bool = True


@dataclass
class RunConfig:
    seed: int = 0
    run_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    flow: FlowConfig = field(default_factory=FlowConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    ablation_rows: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    synth: dict | None = None  # {"train": {"videos": [...]}, "test": {...}}

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.weights.validate()
        self.ablation.validate()
        self.schedule.validate()
        self.eval.validate()
        from .flow import PROVIDERS

        for p in (self.flow.input_provider, self.flow.loss_provider):
            if p not in PROVIDERS:
                raise ConfigError(f"unknown flow provider {p!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **overrides) -> "RunConfig":
        cfg = copy.deepcopy(self)
        for k, v in overrides.items():
            set_dotted(cfg, k, v)
        return cfg

    def pretrain_key(self) -> str:
        """Hash of everything the pretrain phase depends on."""
        d = self.to_dict()
        key = {
            "seed": d["seed"],
            "k_in": d["model"]["k_in"],
            "resolution": d["model"]["resolution"],
            "encoder": d["model"]["encoder"],
            "schedule": {k: d["schedule"][k] for k in ("batch_size", "lr", "lr_min", "pretrain_epochs", "noise_fraction", "betas")},
            "train_root": str(Path(d["data"]["train_root"]).resolve()),
            "input_provider": d["flow"]["input_provider"],
        }
        return hashlib.sha256(json.dumps(key, sort_keys=True, default=list).encode()).hexdigest()[:16]


def _build(tp, value):
    """Recursively construct ``tp`` (a dataclass or typing annotation) from JSON data."""
    if value is None:
        return None
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"expected an object for {tp.__name__}, got {value!r}")
        hints = typing.get_type_hints(tp)
        known = {f.name for f in dataclasses.fields(tp)}
        unknown = set(value) - known
        if unknown:
            raise ConfigError(f"unknown {tp.__name__} fields: {sorted(unknown)}")
        return tp(**{k: _build(hints[k], v) for k, v in value.items()})
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return _build(args[0], value) if len(args) == 1 else value
    if origin is tuple:
        return tuple(value)
    if tp is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}")
    if tp is bool and not isinstance(value, bool):
        raise ConfigError(f"expected a boolean, got {value!r}")
    return value


def config_from_dict(d: dict) -> RunConfig:
    try:
        return _build(RunConfig, d).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    with open(path) as fh:
        d = json.load(fh)
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        _set_in_dict(d, key.split("."), val)
    return config_from_dict(d)


def _set_in_dict(d: dict, keys: list[str], val: Any) -> None:
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ConfigError(f"cannot override inside non-object at {k!r}")
    d[keys[-1]] = val


def set_dotted(cfg: RunConfig, key: str, val: Any) -> None:
    obj = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        obj = getattr(obj, p)
    if not hasattr(obj, parts[-1]):
        raise ConfigError(f"unknown config key {key!r}")
    setattr(obj, parts[-1], val)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
