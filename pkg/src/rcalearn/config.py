"""Run configuration: YAML files with every default pre-filled, strict about
unknown keys so typos fail loudly instead of silently using a default."""

from __future__ import annotations

import dataclasses
import numbers
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import ConfigError
from .simulate import ScenarioConfig
from .telemetry import GOLDEN_SIGNAL_KEYWORDS


@dataclass(frozen=True)
class DataPaths:
    metrics: str | None = None
    logs: str | None = None
    kpi: str | None = None
    log_features: str | None = None  # optional featurization cache


@dataclass(frozen=True)
class WindowConfig:
    history_hours: float = 8.0
    batch_minutes: float = 10.0
    grid_step_s: float = 10.0

    def __post_init__(self):
        if self.history_hours <= 0 or self.batch_minutes <= 0 or self.grid_step_s <= 0:
            raise ConfigError("window settings must be positive")

    @property
    def history_steps(self) -> int:
        return int(round(self.history_hours * 3600.0 / self.grid_step_s))

    @property
    def batch_steps(self) -> int:
        return int(round(self.batch_minutes * 60.0 / self.grid_step_s))


@dataclass(frozen=True)
class ModelConfig:
    conv_kernel: int = 3
    conv_dilations: tuple[int, ...] = (1, 2)
    lambda_temporal: float = 100.0
    lambda_sparse: float = 0.5
    lambda_acyclic: float = 1.0
    mi_weight: float = 1.0
    uniform_attention: bool = False
    iterations: int = 100
    mi_hidden: int = 64
    mi_out: int = 32
    recovery_hidden_scale: int = 2

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.conv_kernel < 1 or any(d < 1 for d in self.conv_dilations):
            raise ConfigError("conv kernel and dilations must be at least 1")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class RwrConfig:
    restart: float = 0.15
    beta: float = 1.0
    tol: float = 1e-8
    max_iter: int = 10000


@dataclass(frozen=True)
class StopConfig:
    p: float = 0.9
    threshold: float = 0.9
    patience: int = 3


@dataclass(frozen=True)
class TriggerConfig:
    window: int = 60
    z_thresh: float = 3.5


@dataclass(frozen=True)
class FeaturizeConfig:
    keywords: tuple[str, ...] = GOLDEN_SIGNAL_KEYWORDS
    prefix_depth: int = 4


@dataclass(frozen=True)
class RunConfig:
    data: DataPaths = field(default_factory=DataPaths)
    out_dir: str = "runs/latest"
    window: WindowConfig = field(default_factory=WindowConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    rwr: RwrConfig = field(default_factory=RwrConfig)
    stop: StopConfig = field(default_factory=StopConfig)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    featurize: FeaturizeConfig = field(default_factory=FeaturizeConfig)
    scenario: ScenarioConfig | None = None
    top_k: int = 5
    max_batches: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError("top_k must be at least 1")
        if self.max_batches is not None and self.max_batches < 1:
            raise ConfigError("max_batches must be at least 1 when set")


_SECTION_TYPES = {
    "data": DataPaths,
    "window": WindowConfig,
    "model": ModelConfig,
    "adam": AdamConfig,
    "rwr": RwrConfig,
    "stop": StopConfig,
    "trigger": TriggerConfig,
    "featurize": FeaturizeConfig,
    "scenario": ScenarioConfig,
}

_TUPLE_KEYS = {"conv_dilations", "keywords"}


def _build(cls, mapping: dict, context: str):
    """Instantiate a config dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(mapping).__name__}")
    allowed = {f.name for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in mapping.items():
        if key not in allowed:
            raise ConfigError(f"{context}: unknown key {key!r}")
        if key in _SECTION_TYPES and isinstance(value, dict):
            kwargs[key] = _build(_SECTION_TYPES[key], value, f"{context}.{key}")
        elif key in _TUPLE_KEYS:
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{context}.{key}: expected a list")
            kwargs[key] = tuple(value)
        else:
            if isinstance(value, numbers.Real) and not isinstance(value, bool):
                pass  # YAML ints where floats are expected are fine
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def run_config_from_mapping(mapping: dict) -> RunConfig:
    return _build(RunConfig, mapping, "config")


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        raw = {}
    return run_config_from_mapping(raw)


def apply_overrides(
    cfg: RunConfig,
    seed: int | None = None,
    out_dir: str | None = None,
    max_batches: int | None = None,
    top_k: int | None = None,
) -> RunConfig:
    updates: dict[str, Any] = {}
    if seed is not None:
        updates["seed"] = seed
    if out_dir is not None:
        updates["out_dir"] = out_dir
    if max_batches is not None:
        updates["max_batches"] = max_batches
    if top_k is not None:
        updates["top_k"] = top_k
    if not updates:
        return cfg
    rebuilt = dataclasses.replace(cfg, **updates)
    return rebuilt


def default_config_yaml() -> str:
    """Render the full default configuration, suitable as a starting file."""
    cfg = RunConfig()

    def as_plain(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: as_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return list(obj)
        return obj

    return yaml.safe_dump(as_plain(cfg), sort_keys=False)
