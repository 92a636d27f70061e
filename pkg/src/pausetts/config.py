"""Configuration tree: ``model.*``, ``train.*``, ``adv.*``, ``data.*``.

Files may be YAML or JSON. Unknown keys are rejected so typos surface early.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

CONFIG_ENV_VAR = "PAUSESPEECH_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class FeatureConfig:
    sample_rate: int = 24000
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float | None = None
    f0_min: float = 50.0
    f0_max: float = 600.0
    voicing_threshold: float = 0.3
    silence_rms: float = 1e-4
    energy_floor: float = 1e-5
    log_floor: float = 1e-5


@dataclass
class DataConfig:
    context_dim: int = 768
    context_layer: int = 9
    context_seed: int = 0
    boundary_token: str = "sp"
    punctuation: str = ".,;:?!—\"')"
    features: FeatureConfig = field(default_factory=FeatureConfig)


@dataclass
class ModelConfig:
    d_model: int = 256
    n_heads: int = 2
    n_blocks: int = 4
    ffn_mult: int = 4
    ffn_kernel: int = 3
    rel_window: int = 4
    dropout: float = 0.1
    prenet_conv_layers: int = 2
    prenet_kernel: int = 5
    predictor_kernel: int = 3
    n_bins: int = 256
    n_speakers: int = 1
    n_mels: int = 128
    use_ps_encoder: bool = True
    use_pw_encoder: bool = True


@dataclass
class AdvConfig:
    enabled: bool = True
    warmup_steps: int = 50000
    window_lengths: list[int] = field(default_factory=lambda: [32, 64, 96])
    weight: float = 1.0
    hidden: int = 64
    n_layers: int = 3


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    eps: float = 1e-9
    weight_decay: float = 0.01
    batch_size: int = 32
    max_steps: int = 400000
    checkpoint_every: int = 1000
    log_every: int = 1
    seed: int = 1234
    w_mel: float = 1.0
    w_dur: float = 0.1
    w_pitch: float = 0.1
    w_energy: float = 0.1
    w_pause: float = 1.0


@dataclass
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    adv: AdvConfig = field(default_factory=AdvConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> "Config":
        t, m = self.train, self.model
        if not t.lr > 0:
            raise ConfigError("train.lr must be > 0")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(t, name) < 1.0:
                raise ConfigError(f"train.{name} must lie in (0, 1)")
        if m.d_model % m.n_heads:
            raise ConfigError("model.d_model must be divisible by model.n_heads")
        if m.d_model % 2:
            raise ConfigError("model.d_model must be even (sinusoidal position embedding)")
        if m.n_mels != self.data.features.n_mels:
            raise ConfigError("model.n_mels must equal data.features.n_mels")
        lengths = list(self.adv.window_lengths)
        if any(L <= 0 for L in lengths) or lengths != sorted(set(lengths)):
            raise ConfigError("adv.window_lengths must be positive, sorted and distinct")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, tree: dict[str, Any] | None) -> "Config":
        return _build(cls, tree or {}, "").validate()

    def updated(self, overrides: dict[str, Any]) -> "Config":
        """Return a copy with dotted-key overrides applied, e.g. ``{"adv.enabled": False}``."""
        tree = self.to_dict()
        for dotted, value in overrides.items():
            node = tree
            *parents, leaf = dotted.split(".")
            for p in parents:
                if p not in node or not isinstance(node[p], dict):
                    raise ConfigError(f"unknown config key {dotted!r}")
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node[leaf] = value
        return Config.from_dict(tree)


def _build(cls, tree: dict[str, Any], prefix: str):
    if not isinstance(tree, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(tree) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in sorted(unknown))}")
    kwargs = {}
    for name, value in tree.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path: str | os.PathLike | None = None) -> Config:
    """Load a config file; falls back to ``$PAUSESPEECH_CONFIG`` and then to defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return Config().validate()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return Config.from_dict(yaml.safe_load(text))
