"""Run configuration: one dataclass tree, loadable from YAML, flags win.

Defaults follow the reference training recipe (all loss weights 1, alpha 0.5,
30 epochs, batch 32, encoder frozen for 4 epochs, early stop patience 3); the
toy profile swaps in a learning rate suited to the small trainable encoder.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .encoder import EncoderConfig, EncoderError
from .training import LossWeights, TrainSchedule


class ConfigError(Exception):
    """Invalid, unknown, or missing configuration values."""


@dataclass(frozen=True)
class DataConfig:
    complex_path: str = ""
    simple_path: str = ""
    annotated_path: str = ""
    dev_fraction: float = 0.1


@dataclass(frozen=True)
class OracleSettings:
    mode: str = "mock"
    flip_rate: float = 0.1
    lexicon_path: str = ""
    base_url: str = ""
    model: str = ""
    api_key_env: str = "ORACLE_API_KEY"
    timeout: float = 30.0
    max_concurrency: int = 1
    retries: int = 3
    cache_path: str = ""

    def __post_init__(self):
        if self.mode not in ("mock", "http"):
            raise ConfigError(f"oracle mode must be 'mock' or 'http', got {self.mode!r}")


@dataclass(frozen=True)
class FillerSettings:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    mask_rate: float = 0.3
    top_k: int = 10


@dataclass(frozen=True)
class ToySettings:
    sentences_per_side: int = 2000
    annotated_count: int = 200
    n_pairs: int = 30
    flip_rate: float = 0.1
    spec_path: str = ""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 13
    out_dir: str = "runs/latest"
    threshold: float = 0.5
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(
        depth=2, heads=4, hidden_dim=64, max_len=64, dropout=0.1, seed=0))
    weights: LossWeights = field(default_factory=LossWeights)
    editor_schedule: TrainSchedule = field(default_factory=lambda: TrainSchedule(
        epochs=30, batch_size=32, learning_rate=1e-3, freeze_epochs=4, patience=3))
    discriminator_schedule: TrainSchedule = field(default_factory=lambda: TrainSchedule(
        epochs=10, batch_size=32, learning_rate=1e-3, freeze_epochs=0, patience=3))
    oracle: OracleSettings = field(default_factory=OracleSettings)
    filler: FillerSettings = field(default_factory=FillerSettings)
    toy: ToySettings = field(default_factory=ToySettings)


_SECTIONS = {
    "data": DataConfig,
    "encoder": EncoderConfig,
    "weights": LossWeights,
    "editor_schedule": TrainSchedule,
    "discriminator_schedule": TrainSchedule,
    "oracle": OracleSettings,
    "filler": FillerSettings,
    "toy": ToySettings,
}
_SCALARS = ("seed", "out_dir", "threshold")


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (ValueError, EncoderError) as exc:
        raise ConfigError(f"invalid values in section {section!r}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(data) - set(_SECTIONS) - set(_SCALARS)
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    kwargs = {}
    for key in _SCALARS:
        if key in data:
            kwargs[key] = data[key]
    for section, cls in _SECTIONS.items():
        if section in data:
            if not isinstance(data[section], dict):
                raise ConfigError(f"config section {section!r} must be a mapping")
            kwargs[section] = _build_section(cls, data[section], section)
    try:
        return RunConfig(**kwargs)
    except (ValueError, EncoderError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    with open(p, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_dict(data)


def with_overrides(config: RunConfig, **scalars) -> RunConfig:
    """Apply non-None scalar overrides (CLI flags win over file values)."""
    updates = {k: v for k, v in scalars.items() if v is not None}
    weight_keys = {k: updates.pop(k) for k in ("lambda1", "lambda2", "lambda3", "alpha") if k in updates}
    if weight_keys:
        config = replace(config, weights=replace(config.weights, **weight_keys))
    if updates:
        config = replace(config, **updates)
    return config


def dump_config(config: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(asdict(config), fh, sort_keys=False)
