"""Experiment configuration: TOML sections per module over two presets.

The desk preset runs the whole pipeline on a quarter-resolution grid in
minutes; the full-scale preset switches to the 112x192 production grid and
wider models.  A file only lists the values it wants to change.  Every
artifact embeds a short hash of the fully resolved configuration so results
can be traced back to their settings.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass(frozen=True)
class ScenarioSection:
    height: int = 28
    width: int = 48
    seed: int = 2024
    land_fraction: float = 7771 / 21504
    noise_scale: float = 1.0


@dataclass(frozen=True)
class RomSection:
    latent: int = 15
    filters: tuple[int, int, int] = (32, 16, 8)
    dense_width: int = 64
    ae_hidden: int = 128
    epochs: int = 60
    batch_size: int = 64
    lr: float = 2e-3
    patience: int = 8
    snapshot_stride: int = 2
    seed: int = 11


@dataclass(frozen=True)
class DynSection:
    enc_hidden: int = 64
    dec_hidden: int = 32
    epochs: int = 150
    batch_size: int = 32
    lr: float = 2e-3
    patience: int = 15
    max_windows: int = 0          # 0 keeps every window
    seed: int = 12


@dataclass(frozen=True)
class ConvLstmSection:
    hidden: int = 4
    ksize: int = 3
    epochs: int = 18
    batch_size: int = 8
    lr: float = 3e-3
    patience: int = 6
    max_windows: int = 96
    seed: int = 13


@dataclass(frozen=True)
class RolloutSection:
    drivers: str = "predicted"


@dataclass(frozen=True)
class FinetuneSection:
    epochs: int = 30
    batch_size: int = 8
    seed: int = 14


@dataclass(frozen=True)
class PipelineSection:
    window_lengths: tuple[int, ...] = (3, 6, 12)
    workers: int = 2
    heatmap_months: tuple[int, ...] = (10, 65, 230)


@dataclass(frozen=True)
class PipelineConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    rom: RomSection = field(default_factory=RomSection)
    dyn: DynSection = field(default_factory=DynSection)
    convlstm: ConvLstmSection = field(default_factory=ConvLstmSection)
    rollout: RolloutSection = field(default_factory=RolloutSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    paper_scale: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def desk_defaults() -> PipelineConfig:
    return PipelineConfig()


def full_scale_defaults() -> PipelineConfig:
    """Production-size grid and the wide model variants."""
    return PipelineConfig(
        scenario=ScenarioSection(height=112, width=192),
        rom=RomSection(filters=(128, 64, 32), dense_width=128, snapshot_stride=1),
        dyn=DynSection(enc_hidden=512, dec_hidden=256),
        convlstm=ConvLstmSection(hidden=8),
        paper_scale=True,
    )


_SECTIONS = {
    "scenario": ScenarioSection,
    "rom": RomSection,
    "dyn": DynSection,
    "convlstm": ConvLstmSection,
    "rollout": RolloutSection,
    "finetune": FinetuneSection,
    "pipeline": PipelineSection,
}


def _merge_section(base, cls, values: dict, section: str):
    known = {f.name: f.type for f in dataclasses.fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(
            f"unknown keys in [{section}]: {sorted(unknown)}")
    coerced = {}
    for key, value in values.items():
        current = getattr(base, key)
        if isinstance(current, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"[{section}] {key} must be an array")
            coerced[key] = tuple(value)
        elif isinstance(current, bool):
            coerced[key] = bool(value)
        elif isinstance(current, int) and not isinstance(value, bool):
            if not isinstance(value, int):
                raise ConfigError(f"[{section}] {key} must be an integer")
            coerced[key] = value
        elif isinstance(current, float):
            if not isinstance(value, (int, float)):
                raise ConfigError(f"[{section}] {key} must be a number")
            coerced[key] = float(value)
        elif isinstance(current, str):
            if not isinstance(value, str):
                raise ConfigError(f"[{section}] {key} must be a string")
            coerced[key] = value
        else:
            coerced[key] = value
    return dataclasses.replace(base, **coerced)


def load_config(path: str | Path | None = None,
                paper_scale: bool = False) -> PipelineConfig:
    """Resolve a configuration from presets plus an optional TOML file."""
    config = full_scale_defaults() if paper_scale else desk_defaults()
    if path is None:
        return config
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    updates = {}
    for section, values in raw.items():
        if not isinstance(values, dict):
            raise ConfigError(f"top-level key {section!r} must be a table")
        updates[section] = _merge_section(getattr(config, section),
                                          _SECTIONS[section], values, section)
    return dataclasses.replace(config, **updates)


def config_from_dict(data: dict) -> PipelineConfig:
    """Rebuild a configuration from its ``to_dict`` form.

    Used to resume an experiment directory: the stored ``config.json``
    payload round-trips through JSON, so tuples arrive as lists.
    """
    if not isinstance(data, dict):
        raise ConfigError("config payload must be a mapping")
    extra = set(data) - set(_SECTIONS) - {"paper_scale"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    config = PipelineConfig(paper_scale=bool(data.get("paper_scale", False)))
    updates = {}
    for section, values in data.items():
        if section == "paper_scale":
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        updates[section] = _merge_section(getattr(config, section),
                                          _SECTIONS[section], values, section)
    return dataclasses.replace(config, **updates)


def config_hash(config: PipelineConfig) -> str:
    """Short stable digest of the resolved configuration."""
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
