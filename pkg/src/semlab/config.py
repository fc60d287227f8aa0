"""Experiment configuration loaded from TOML, with strict key checking."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .fuzzyctl import FuzzyParams
from .kb.llm import LlmClientConfig
from .trainer import TrainConfig

KB_BACKENDS = ("mock", "identity", "llm", "none")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PathsConfig:
    corpus: str = "demo"
    checkpoint: str = "runs/demo/model.ckpt"
    baseline_checkpoint: str = "runs/demo/baseline.ckpt"
    output_dir: str = "runs/demo"

    def corpus_path(self) -> Path:
        from .textcore import demo_corpus_path

        return demo_corpus_path() if self.corpus == "demo" else Path(self.corpus)


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 48
    n_layers: int = 2
    n_heads: int = 4
    max_len: int = 32
    hidden: int = 32
    k: int = 16
    min_count: int = 1

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigError("model.d_model must be divisible by model.n_heads")
        if self.k % 2:
            raise ConfigError("model.k must be even")
        if min(self.d_model, self.n_layers, self.n_heads, self.max_len, self.hidden, self.k, self.min_count) < 1:
            raise ConfigError("model dimensions must be positive")


@dataclass(frozen=True)
class FuzzySection:
    a: tuple[float, float, float] = FuzzyParams.a
    b: tuple[float, float, float] = FuzzyParams.b
    c: tuple[float, float, float] = FuzzyParams.c
    p: tuple[float, float, float] = FuzzyParams.p
    q: tuple[float, float, float] = FuzzyParams.q
    tune_antecedents: bool = False
    max_sweeps: int = 3
    snr_samples: tuple[float, ...] = (-5.0, 0.0, 5.0, 10.0)
    tune_sentences: int = 50

    def params(self) -> FuzzyParams:
        return FuzzyParams(self.a, self.b, self.c, self.p, self.q)


@dataclass(frozen=True)
class BackgroundConfig:
    user_id: str = "user"
    facts: tuple[str, ...] = ()


@dataclass(frozen=True)
class KbConfig:
    backend: str = "mock"
    cache_path: str = ""
    audit_path: str = ""
    llm: LlmClientConfig = field(default_factory=LlmClientConfig)
    background: BackgroundConfig = field(default_factory=BackgroundConfig)

    def __post_init__(self):
        if self.backend not in KB_BACKENDS:
            raise ConfigError(f"kb.backend must be one of {KB_BACKENDS}, got {self.backend!r}")


@dataclass(frozen=True)
class PublicKbConfig:
    user_id: str = ""
    face_image_path: str = ""
    vocal_feature_vector: tuple[float, ...] = ()


@dataclass(frozen=True)
class SweepConfig:
    channel: str = "awgn"
    snr_db: tuple[float, ...] = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    design_snr_db: float = 20.0

    def __post_init__(self):
        if self.channel not in ("awgn", "rayleigh"):
            raise ConfigError(f"sweep.channel must be awgn or rayleigh, got {self.channel!r}")
        if not self.snr_db or not self.seeds:
            raise ConfigError("sweep.snr_db and sweep.seeds must be non-empty")


@dataclass(frozen=True)
class Toggles:
    tracing: bool = True
    caching: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fuzzy: FuzzySection = field(default_factory=FuzzySection)
    kb: KbConfig = field(default_factory=KbConfig)
    public_kb: PublicKbConfig | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    toggles: Toggles = field(default_factory=Toggles)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_NESTED = {
    (ExperimentConfig, "paths"): PathsConfig,
    (ExperimentConfig, "model"): ModelConfig,
    (ExperimentConfig, "train"): TrainConfig,
    (ExperimentConfig, "fuzzy"): FuzzySection,
    (ExperimentConfig, "kb"): KbConfig,
    (ExperimentConfig, "public_kb"): PublicKbConfig,
    (ExperimentConfig, "sweep"): SweepConfig,
    (ExperimentConfig, "toggles"): Toggles,
    (KbConfig, "llm"): LlmClientConfig,
    (KbConfig, "background"): BackgroundConfig,
}


def _coerce(value: Any, default: Any, key: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return tuple(value)
    return value


def _build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if key not in fields:
            raise ConfigError(f"unknown config key '{dotted}'")
        sub = _NESTED.get((cls, key))
        if sub is not None:
            kwargs[key] = _build(sub, value, dotted + ".")
        else:
            kwargs[key] = _coerce(value, getattr(defaults, key), dotted)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from exc


def parse_config(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data)
    try:
        cfg.fuzzy.params()
    except ValueError as exc:
        raise ConfigError(f"fuzzy: {exc}") from exc
    if cfg.train.seed != cfg.seed and "seed" not in data.get("train", {}):
        # one master seed drives training unless overridden explicitly
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=cfg.seed))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
