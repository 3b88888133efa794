"""Run configuration: schema, defaults, YAML load/dump.

One structured document with a version field covers the whole pipeline.
Unknown keys are rejected by name; every field has a default. The effective
configuration is echoed verbatim into a run directory so a run can be
reproduced from its output alone (the seed included).

Defaults are the full-scale recipe (8x320 encoder, 320-wide decoder, 10
filters of width 100, beam 20, Adadelta epsilon 1e-8); ``desk_config`` is the
small profile used for toy training and tests (2x64 encoder, width-5
filters, no batch norm).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .attention import AttentionConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .hybrid import HybridConfig
from .tokenizer import DEFAULT_ALPHABET

CONFIG_VERSION = 1


@dataclass(frozen=True)
class TokenizerSection:
    # 472 merges on the default 27-character alphabet + boundary yields a
    # 500-unit inventory when every merge is novel
    num_merges: int = 472
    alphabet: str = DEFAULT_ALPHABET

    def __post_init__(self):
        if self.num_merges < 0:
            raise ConfigError(f"tokenizer.num_merges must be >= 0, got {self.num_merges}")
        if not self.alphabet:
            raise ConfigError("tokenizer.alphabet must not be empty")


@dataclass(frozen=True)
class FeaturesSection:
    num_mel: int = 40
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    preemphasis: float = 0.97
    fmin: float = 20.0
    fmax: float = 7800.0
    cmvn: bool = True

    def __post_init__(self):
        if self.num_mel < 1 or self.sample_rate < 1:
            raise ConfigError("features.num_mel and features.sample_rate must be positive")


@dataclass(frozen=True)
class DecodeSection:
    beam: int = 20
    max_len: int | None = None  # None: 2 * L + 10 per utterance
    length_penalty: float = 0.0

    def __post_init__(self):
        if self.beam < 1:
            raise ConfigError(f"decode.beam must be >= 1, got {self.beam}")
        if self.max_len is not None and self.max_len < 1:
            raise ConfigError(f"decode.max_len must be >= 1, got {self.max_len}")


@dataclass(frozen=True)
class PathsSection:
    units: str | None = None
    merges: str | None = None


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    tokenizer: TokenizerSection = field(default_factory=TokenizerSection)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: AttentionConfig = field(default_factory=AttentionConfig)
    training: HybridConfig = field(default_factory=HybridConfig)
    decode: DecodeSection = field(default_factory=DecodeSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")


def default_config() -> RunConfig:
    return RunConfig()


def desk_config() -> RunConfig:
    """Small profile for toy-scale training and tests."""
    return RunConfig(
        encoder=EncoderConfig(num_layers=2, cells_per_direction=64,
                              subsample_layers=(2,), batch_norm=False),
        decoder=AttentionConfig(hidden=64, embed_dim=64, att_dim=64,
                                conv_filters=10, conv_width=5),
    )


_SECTION_TYPES = {
    "tokenizer": TokenizerSection,
    "features": FeaturesSection,
    "encoder": EncoderConfig,
    "decoder": AttentionConfig,
    "training": HybridConfig,
    "decode": DecodeSection,
    "paths": PathsSection,
}

# YAML key <-> dataclass field name, where they differ
_FIELD_RENAMES = {("training", "lambda"): "lambda_"}
_KEY_RENAMES = {("training", "lambda_"): "lambda"}


def _build_section(section: str, cls, data) -> object:
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = _FIELD_RENAMES.get((section, key), key)
        if name not in names:
            raise ConfigError(f"unknown key {section}.{key}")
        if name == "subsample_layers" and value is not None:
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in section {section!r}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    version = data.get("version", CONFIG_VERSION)
    sections = {}
    for key, value in data.items():
        if key == "version":
            continue
        if key not in _SECTION_TYPES:
            raise ConfigError(f"unknown key {key}")
        sections[key] = _build_section(key, _SECTION_TYPES[key], value)
    try:
        return RunConfig(version=version, **sections)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(config: RunConfig) -> dict:
    out: dict = {"version": config.version}
    for section, cls in _SECTION_TYPES.items():
        value = getattr(config, section)
        entry = {}
        for f in dataclasses.fields(cls):
            key = _KEY_RENAMES.get((section, f.name), f.name)
            raw = getattr(value, f.name)
            if isinstance(raw, tuple):
                raw = list(raw)
            entry[key] = raw
        out[section] = entry
    return out


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    return config_from_dict(data)


def echo_config(config: RunConfig, path) -> None:
    """Write the effective configuration (defaults filled in) to a run directory."""
    Path(path).write_text(yaml.safe_dump(config_to_dict(config), sort_keys=False),
                          encoding="utf-8")


def override(config: RunConfig, **section_updates) -> RunConfig:
    """Functional update helper: override(cfg, training=dict(seed=3))."""
    changes = {}
    for section, updates in section_updates.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown section {section}")
        changes[section] = replace(getattr(config, section), **updates)
    return replace(config, **changes)
