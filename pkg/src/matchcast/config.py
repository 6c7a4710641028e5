"""Run configuration: YAML file values overridden by command-line flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .forest import ForestParams


@dataclass(frozen=True)
class TextConfig:
    mu: float = 1.25
    theta: float = 0.6
    min_df: int = 3
    max_df: float = 0.9
    tune_mu: bool = False


@dataclass(frozen=True)
class DCConfig:
    xi: float = 0.0065
    rho_min: float = -0.3
    rho_max: float = 0.3
    max_goals: int = 10
    gtol: float = 1e-6
    max_iter: int = 500

    @property
    def rho_bounds(self) -> tuple[float, float]:
        return (self.rho_min, self.rho_max)


@dataclass(frozen=True)
class EnsembleConfig:
    folds: int = 5
    dc_refit_days: int = 7
    min_dc_history: int = 100
    use_text: bool = True


@dataclass(frozen=True)
class EvalConfig:
    seasons: tuple[str, ...] = ("2016-17", "2017-18", "2018-19")
    test_size: int = 300
    walk_season: str = "2018-19"
    week_size: int = 10
    train_fraction: float = 0.8
    ablation: bool = True


@dataclass(frozen=True)
class ModelConfig:
    text: TextConfig = field(default_factory=TextConfig)
    dc: DCConfig = field(default_factory=DCConfig)
    text_forest: ForestParams = field(default_factory=ForestParams)
    stacker_forest: ForestParams = field(default_factory=ForestParams)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    seed: int = 42
    n_jobs: int = 1


@dataclass(frozen=True)
class RunConfig:
    matches: str | None = None
    previews: str | None = None
    aliases: str | None = None
    seed: int | None = None
    n_jobs: int = 1
    text: TextConfig = field(default_factory=TextConfig)
    dc: DCConfig = field(default_factory=DCConfig)
    text_forest: ForestParams = field(default_factory=ForestParams)
    stacker_forest: ForestParams = field(default_factory=ForestParams)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def model_config(self) -> ModelConfig:
        if self.seed is None:
            raise ConfigError("a seed is required (set `seed:` in the config or pass --seed)")
        return ModelConfig(
            self.text, self.dc, self.text_forest, self.stacker_forest, self.ensemble, self.seed, self.n_jobs
        )

    def validate(self, require_paths: tuple[str, ...] = ()) -> None:
        for name in require_paths:
            value = getattr(self, name)
            if not value:
                raise ConfigError(f"missing required path {name!r}")
        for name in ("matches", "previews", "aliases"):
            value = getattr(self, name)
            if value and not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")
        if not 0.5 < self.text.theta <= 1.0:
            raise ConfigError("text.theta must lie in (0.5, 1]")
        if self.text.mu <= 0:
            raise ConfigError("text.mu must be positive")
        if self.dc.xi < 0:
            raise ConfigError("dc.xi must be non-negative")
        if not self.dc.rho_min < 0 < self.dc.rho_max:
            raise ConfigError("dc rho bounds must straddle 0")
        if self.ensemble.folds < 2:
            raise ConfigError("ensemble.folds must be >= 2")
        if not 0 < self.eval.train_fraction < 1:
            raise ConfigError("eval.train_fraction must lie in (0, 1)")


_SECTIONS = {
    "text": TextConfig,
    "dc": DCConfig,
    "text_forest": ForestParams,
    "stacker_forest": ForestParams,
    "ensemble": EnsembleConfig,
    "eval": EvalConfig,
}


def _build_section(cls, values: Mapping[str, Any], where: str):
    if not isinstance(values, Mapping):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = dict(values)
    if "seasons" in kwargs:
        kwargs["seasons"] = tuple(str(s) for s in kwargs["seasons"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_mapping(data: Mapping[str, Any]) -> RunConfig:
    data = dict(data or {})
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return config_from_mapping(data or {})


def override(cfg: RunConfig, **flat: Any) -> RunConfig:
    """Apply dotted overrides such as ``{"text.mu": 1.3, "seed": 7}``; ``None`` values are skipped."""
    sections: dict[str, dict[str, Any]] = {}
    top: dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            continue
        if "." in key:
            sec, name = key.split(".", 1)
            sections.setdefault(sec, {})[name] = value
        else:
            top[key] = value
    for sec, values in sections.items():
        current = getattr(cfg, sec)
        try:
            top[sec] = dataclasses.replace(current, **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{sec}: {exc}") from None
    return dataclasses.replace(cfg, **top)
