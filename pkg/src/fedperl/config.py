"""Experiment configuration: parsing, validation and defaults.

Config files are YAML (JSON also parses). Every key is optional except
``mode``; unknown keys are rejected. A top-level ``preset`` key loads a
built-in configuration first and overlays the remaining keys on top of it.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .data import PartitionPlan
from .errors import ConfigError
from .ssl import ENSEMBLE_NORMS, AugmentParams, SslHyper

MODES = (
    "local_lower",
    "local_upper",
    "local_ssl",
    "fed_lower",
    "fed_upper",
    "ssfl",
    "fedperl_nopa",
    "fedperl_pa",
)
LOCAL_MODES = ("local_lower", "local_upper", "local_ssl")
FEDPERL_MODES = ("fedperl_nopa", "fedperl_pa")
PEERS_FROM = ("local", "global")


@dataclass(frozen=True)
class SslConfig:
    tau: float = 0.6
    tau_local: float = 0.9
    beta: float = 0.5
    gamma: float = 0.01
    T: int = 2

    def __post_init__(self):
        if not 0.0 < self.tau_local <= 1.0:
            raise ConfigError(f"ssl.tau_local must lie in (0, 1], got {self.tau_local}")
        try:
            self.hyper()
        except ConfigError as exc:
            raise ConfigError(f"ssl.{exc}") from None

    def hyper(self, local: bool = False) -> SslHyper:
        return SslHyper(self.tau_local if local else self.tau, self.beta, self.gamma, self.T)


@dataclass(frozen=True)
class AugmentConfig:
    soft_sigma: float = 0.05
    hard_sigma: float = 0.25
    hard_mask: float = 0.2

    def __post_init__(self):
        for k in ("soft_sigma", "hard_sigma"):
            if getattr(self, k) < 0:
                raise ConfigError(f"augment.{k} must be >= 0")
        if not 0.0 <= self.hard_mask <= 1.0:
            raise ConfigError("augment.hard_mask must lie in [0, 1]")

    def params(self) -> AugmentParams:
        return AugmentParams(self.soft_sigma, self.hard_sigma, self.hard_mask)


@dataclass(frozen=True)
class DataConfig:
    kind: str = "synthetic"
    classes: int = 8
    dim: int = 16
    n: int = 8000
    separation: float = 3.0
    seed: int | None = None  # None: derived from the experiment seed
    path: str | None = None
    labeled_fraction: float = 0.12
    val_fraction: float = 0.1
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv"):
            raise ConfigError(f"data.kind must be 'synthetic' or 'csv', got {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ConfigError("data.path is required when data.kind is 'csv'")
        if self.kind == "synthetic":
            if self.classes < 2:
                raise ConfigError("data.classes must be >= 2")
            if self.dim < 2:
                raise ConfigError("data.dim must be >= 2")
            if self.n < 0:
                raise ConfigError("data.n must be >= 0")
            if self.separation <= 0:
                raise ConfigError("data.separation must be > 0")
        for k in ("labeled_fraction", "val_fraction", "test_fraction"):
            v = getattr(self, k)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"data.{k} must lie in [0, 1], got {v}")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ConfigError("data.val_fraction + data.test_fraction must be < 1")


# 10 clients: five follow template A (classes 0-3 dominant), three template B
# (classes 4-7 dominant, class 0 missing), and two outliers whose support is
# two classes split across both templates.
DEFAULT_TEMPLATE_A = (0.22, 0.22, 0.2, 0.2, 0.04, 0.04, 0.04, 0.04)
DEFAULT_TEMPLATE_B = (0.0, 0.04, 0.04, 0.04, 0.2, 0.22, 0.22, 0.24)
DEFAULT_OUTLIERS = (
    (0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0),
    (0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.5),
)
DEFAULT_SIZES = (700, 650, 600, 550, 500, 450, 400, 350, 200, 250)


@dataclass(frozen=True)
class PartitionConfig:
    kind: str = "two_community"
    template_a: tuple[float, ...] = DEFAULT_TEMPLATE_A
    template_b: tuple[float, ...] = DEFAULT_TEMPLATE_B
    n_a: int = 5
    n_b: int = 3
    outliers: tuple[tuple[float, ...], ...] = DEFAULT_OUTLIERS
    sizes: tuple[int, ...] | int = DEFAULT_SIZES
    n_clients: int = 10
    alpha: float = 0.5
    class_probs: tuple[tuple[float, ...], ...] = ()
    community: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("two_community", "dirichlet", "uniform", "explicit"):
            raise ConfigError(f"partition.kind {self.kind!r} is not supported")

    def build(self, n_classes: int, seed: int) -> PartitionPlan:
        try:
            if self.kind == "two_community":
                plan = PartitionPlan.two_community(
                    self.template_a, self.template_b, self.n_a, self.n_b, self.sizes, self.outliers
                )
            elif self.kind == "dirichlet":
                plan = PartitionPlan.dirichlet(self.alpha, self.n_clients, n_classes, self.sizes, seed)
            elif self.kind == "uniform":
                plan = PartitionPlan.uniform(self.n_clients, n_classes, self.sizes)
            else:
                plan = PartitionPlan.explicit(self.class_probs, self.sizes, self.community)
        except ConfigError as exc:
            raise ConfigError(f"partition: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"partition: {exc}") from None
        if plan.n_classes != n_classes:
            raise ConfigError(
                f"partition: class vectors have {plan.n_classes} entries but data has {n_classes} classes"
            )
        return plan


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    seed: int = 0
    rounds: int = 500
    warmup_rounds: int = 10
    participation_rate: float = 0.3
    batch_size: int = 16
    unlabeled_ratio: int = 3
    steps_per_round: int = 20
    lr: float = 5e-5
    hidden: tuple[int, ...] = (32,)
    ensemble_norm: str = "mean"
    peers_from: str = "local"
    threads: int = 1
    out: str | None = None
    ssl: SslConfig = field(default_factory=SslConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    data: DataConfig = field(default_factory=DataConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {self.mode!r}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.warmup_rounds < 0:
            raise ConfigError("warmup_rounds must be >= 0")
        if self.rounds < self.warmup_rounds:
            raise ConfigError(
                f"rounds ({self.rounds}) must be >= warmup_rounds ({self.warmup_rounds})"
            )
        if not 0.0 < self.participation_rate <= 1.0:
            raise ConfigError(f"participation_rate must lie in (0, 1], got {self.participation_rate}")
        for k in ("batch_size", "steps_per_round", "threads"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be >= 1")
        if self.unlabeled_ratio < 0:
            raise ConfigError("unlabeled_ratio must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if any(h <= 0 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        if self.ensemble_norm not in ENSEMBLE_NORMS:
            raise ConfigError(f"ensemble_norm must be one of {ENSEMBLE_NORMS}")
        if self.peers_from not in PEERS_FROM:
            raise ConfigError(f"peers_from must be one of {PEERS_FROM}")

    @property
    def is_local(self) -> bool:
        return self.mode in LOCAL_MODES

    @property
    def data_seed(self) -> int:
        return self.seed if self.data.seed is None else self.data.seed

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


_SECTIONS = {"ssl": SslConfig, "augment": AugmentConfig, "data": DataConfig, "partition": PartitionConfig}


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v


def _coerce(cls, key: str, value):
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[key]
    t = str(ftype)
    if value is None:
        if "None" in t:
            return None
        raise ConfigError(f"{key} must not be null")
    if t.startswith("int") and not t.startswith("int |"):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if t == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if t == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    return _tupleize(value)


def _build(cls, raw: dict, prefix: str = ""):
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown config key: {prefix}{unknown[0]}")
    kw = {}
    for k, v in raw.items():
        if k in _SECTIONS and cls is ExperimentConfig:
            kw[k] = _build(_SECTIONS[k], v or {}, f"{k}.")
        else:
            try:
                kw[k] = _coerce(cls, k, v)
            except ConfigError as exc:
                raise ConfigError(f"{prefix}{exc}") from None
    return cls(**kw)


BENCH_10C: dict[str, Any] = {
    "rounds": 60,
    "warmup_rounds": 10,
    "steps_per_round": 20,
    "lr": 0.003,
    "hidden": [32],
    "data": {"kind": "synthetic", "classes": 8, "dim": 16, "n": 8000, "separation": 3.0},
    "partition": {"kind": "two_community"},
}
PRESETS = {"bench-10c": BENCH_10C}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw or {})
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r} (known: {', '.join(PRESETS)})")
        raw = _merge(PRESETS[preset], raw)
    if "mode" not in raw:
        raise ConfigError("missing required key: mode")
    return _build(ExperimentConfig, raw)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def bench_10c(mode: str, seed: int = 0, **overrides) -> ExperimentConfig:
    return config_from_dict({"preset": "bench-10c", "mode": mode, "seed": seed, **overrides})
