"""Experiment configuration: a TOML file with nested sections.

Every section maps onto a dataclass; unknown keys and wrongly typed values
are rejected with a message naming the offending key. Relative paths are
resolved against the directory holding the configuration file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_args, get_origin, get_type_hints

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .evaluate import ALGORITHMS, COMBINERS, INDIVIDUAL
from .forest import ForestParams
from .gbm import GbmParams
from .quantile import DEFAULT_LEVELS, DomainError, check_levels


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Exclusion:
    start: str
    end: str
    gauge: str | None = None


@dataclass(frozen=True)
class DataConfig:
    flow_dir: str = "flow"
    meteo_file: str = "meteo.csv"
    include: tuple[str, ...] = ()
    exclude: tuple[str, ...] = ()
    max_missing_fraction: float = 0.20
    exclusions: tuple[Exclusion, ...] = ()


@dataclass(frozen=True)
class ExperimentSettings:
    levels: tuple[float, ...] = DEFAULT_LEVELS
    train_fraction: float = 0.5
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"


@dataclass(frozen=True)
class QrSettings:
    enabled: bool = True


@dataclass(frozen=True)
class LinearBoostSettings:
    enabled: bool = True
    m_stop: int = 2000
    nu: float = 0.1
    validation_fraction: float | None = None


@dataclass(frozen=True)
class ForestSettings:
    enabled: bool = True
    n_trees: int = 2000
    sample_fraction: float = 0.5
    min_leaf: int = 5
    mtry: int | None = None
    honest: bool = False

    def params(self) -> ForestParams:
        return ForestParams(self.n_trees, self.sample_fraction, self.min_leaf, self.mtry,
                            self.honest)


@dataclass(frozen=True)
class GbmSettings:
    enabled: bool = True
    n_trees: int = 2000
    learning_rate: float = 0.05
    max_depth: int = 3
    min_leaf: int = 10
    bag_fraction: float = 0.5

    def params(self) -> GbmParams:
        return GbmParams(self.n_trees, self.learning_rate, self.max_depth, self.min_leaf,
                         self.bag_fraction)


@dataclass(frozen=True)
class QrnnSettings:
    enabled: bool = True
    restarts: int = 5
    schedule_length: int = 12
    max_iter: int = 500
    penalty: float = 0.0


@dataclass(frozen=True)
class CombinerSettings:
    enabled: bool = True


@dataclass(frozen=True)
class AlgorithmConfig:
    qr: QrSettings = field(default_factory=QrSettings)
    linear_boost: LinearBoostSettings = field(default_factory=LinearBoostSettings)
    forest: ForestSettings = field(default_factory=ForestSettings)
    gbm: GbmSettings = field(default_factory=GbmSettings)
    qrnn: QrnnSettings = field(default_factory=QrnnSettings)
    mean_combiner: CombinerSettings = field(default_factory=CombinerSettings)
    median_combiner: CombinerSettings = field(default_factory=CombinerSettings)

    def enabled(self, name: str) -> bool:
        return getattr(self, name).enabled


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    algorithms: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    base_dir: str = field(default=".", compare=False)

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def with_overrides(self, *, seed: int | None = None, workers: int | None = None,
                       output_dir: str | None = None) -> "ExperimentConfig":
        exp = self.experiment
        if seed is not None:
            exp = dataclasses.replace(exp, seed=seed)
        if workers is not None:
            exp = dataclasses.replace(exp, workers=workers)
        if output_dir is not None:
            exp = dataclasses.replace(exp, output_dir=str(Path(output_dir).resolve()))
        return validate(dataclasses.replace(self, experiment=exp))


def _coerce(value: Any, hint: Any, key: str) -> Any:
    origin = get_origin(hint)
    args = get_args(hint)
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected a table")
        return _build(hint, value, key)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected an array")
        return tuple(_coerce(v, args[0], f"{key}[{i}]") for i, v in enumerate(value))
    if args and type(None) in args:
        inner = [a for a in args if a is not type(None)][0]
        return _coerce(value, inner, key)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string")
        return value
    raise ConfigError(f"{key}: unsupported type")


def _build(cls, data: dict, prefix: str = ""):
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.name != "base_dir"}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{prefix}." if prefix else ""
        raise ConfigError(f"unknown configuration key(s): {', '.join(where + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        key = f"{prefix}.{name}" if prefix else name
        kwargs[name] = _coerce(value, hints[name], key)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    exp = cfg.experiment
    try:
        check_levels(exp.levels)
    except DomainError as exc:
        raise ConfigError(f"experiment.levels: {exc}") from exc
    if not 0.0 < exp.train_fraction < 1.0:
        raise ConfigError("experiment.train_fraction must lie in (0, 1)")
    if exp.workers < 1:
        raise ConfigError("experiment.workers must be at least 1")
    if exp.seed < 0:
        raise ConfigError("experiment.seed must be non-negative")
    if not 0.0 <= cfg.data.max_missing_fraction <= 1.0:
        raise ConfigError("data.max_missing_fraction must lie in [0, 1]")
    alg = cfg.algorithms
    if alg.linear_boost.m_stop < 0 or not 0.0 < alg.linear_boost.nu <= 1.0:
        raise ConfigError("algorithms.linear_boost: m_stop >= 0 and nu in (0, 1] required")
    if alg.gbm.n_trees < 0 or alg.forest.n_trees < 1:
        raise ConfigError("algorithms.gbm.n_trees >= 0 and algorithms.forest.n_trees >= 1 required")
    if not 0.0 < alg.gbm.bag_fraction <= 1.0 or not 0.0 < alg.forest.sample_fraction <= 1.0:
        raise ConfigError("bag/sample fractions must lie in (0, 1]")
    if alg.qrnn.restarts < 1 or alg.qrnn.schedule_length < 1:
        raise ConfigError("algorithms.qrnn: restarts and schedule_length must be positive")
    for comb in COMBINERS:
        if alg.enabled(comb):
            off = [name for name in INDIVIDUAL if name != "qr" and not alg.enabled(name)]
            if off:
                raise ConfigError(f"algorithms.{comb} needs every individual algorithm; "
                                  f"disabled: {', '.join('algorithms.' + o for o in off)}")
    for ex in cfg.data.exclusions:
        try:
            if np.datetime64(ex.end, "D") < np.datetime64(ex.start, "D"):
                raise ValueError("end before start")
        except ValueError as exc:
            raise ConfigError(f"data.exclusions: bad range {ex.start}..{ex.end} ({exc})") from exc
    return cfg


def parse_config(data: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    if "algorithms" in data and isinstance(data["algorithms"], dict):
        unknown = sorted(set(data["algorithms"]) - set(ALGORITHMS))
        if unknown:
            raise ConfigError("unknown algorithm(s): "
                              + ", ".join(f"algorithms.{u}" for u in unknown))
    cfg = _build(ExperimentConfig, data)
    return validate(dataclasses.replace(cfg, base_dir=str(Path(base_dir).resolve())))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.parent)
