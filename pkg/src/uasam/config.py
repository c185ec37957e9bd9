"""Run configuration: one YAML document covering every module, with strict
unknown-key rejection, dotted-path overrides, and a resolved echo file."""

import os
from dataclasses import dataclass, field, fields

import yaml

from .adapter import AdapterConfig
from .backbone import BackboneConfig
from .data import SynthConfig
from .errors import ConfigError
from .latent import LatentConfig
from .training import LossConfig, TrainConfig


@dataclass
class DataConfig:
    split_ratio: float = 0.8
    split_seed: int = 0
    val_fraction: float = 0.1


_SECTIONS = {
    "backbone": BackboneConfig,
    "adapter": AdapterConfig,
    "latent": LatentConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
    "data": DataConfig,
}


@dataclass
class RunConfig:
    seed: int = 0
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    latent: LatentConfig = field(default_factory=LatentConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    data: DataConfig = field(default_factory=DataConfig)


def _coerce(section: str, name: str, current, value):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{name}: expected boolean, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, str):
            try:
                value = int(value)
            except ValueError:
                raise ConfigError(
                    f"{section}.{name}: expected integer, got {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or int(value) != value:
            raise ConfigError(f"{section}.{name}: expected integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, str):
            # YAML leaves dotless exponents like 3e-4 as strings
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(
                    f"{section}.{name}: expected number, got {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{name}: expected number, got {value!r}")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{name}: expected string, got {value!r}")
        return value
    return value


def _apply_section(obj, section: str, mapping):
    if not isinstance(mapping, dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    names = {f.name for f in fields(obj)}
    for key, value in mapping.items():
        if key not in names:
            raise ConfigError(f"unknown config key {section}.{key}")
        setattr(obj, key, _coerce(section, key, getattr(obj, key), value))


def load_config(path=None) -> RunConfig:
    """Defaults, optionally updated from a YAML file; unknown keys rejected."""
    cfg = RunConfig()
    if path is None:
        return cfg
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML ({e})") from None
    if doc is None:
        return cfg
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for key, value in doc.items():
        if key == "seed":
            cfg.seed = _coerce("", "seed", cfg.seed, value)
        elif key in _SECTIONS:
            _apply_section(getattr(cfg, key), key, value)
        else:
            raise ConfigError(f"unknown config key {key}")
    return cfg


def apply_overrides(cfg: RunConfig, items):
    """Apply 'section.key=value' strings; values parsed as YAML scalars."""
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        if dotted == "seed":
            cfg.seed = _coerce("", "seed", cfg.seed, value)
            continue
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config key {dotted}")
        _apply_section(getattr(cfg, section), section, {key: value})


def validate_config(cfg: RunConfig):
    cfg.backbone.validate()
    cfg.adapter.validate()
    cfg.latent.validate()
    cfg.loss.validate()
    cfg.train.validate()
    cfg.synth.validate()
    if not 0.0 < cfg.data.split_ratio < 1.0:
        raise ConfigError("data.split_ratio must be in (0, 1)")
    if not 0.0 < cfg.data.val_fraction < 0.5:
        raise ConfigError("data.val_fraction must be in (0, 0.5)")


def resolved_dict(cfg: RunConfig) -> dict:
    out = {"seed": cfg.seed}
    for name in _SECTIONS:
        out[name] = vars(getattr(cfg, name)).copy()
    return out


def write_echo(cfg: RunConfig, out_dir) -> str:
    """Write the fully-resolved config next to the run outputs."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config_resolved.yaml")
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(resolved_dict(cfg), f, sort_keys=True)
    return path
