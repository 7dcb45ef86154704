"""Experiment configuration: dataclasses, JSON round-trip and validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .bo import BOConfig
from .controller import SensorMode
from .environment import EnvSchedule
from .rl import RLConfig
from .sim import SimConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class EvoConfig:
    pop_size: int = 100
    n_offspring: int = 100
    tournament_size: int = 4
    generations: int = 100
    inheritance: str = "lamarckian"  # or "darwinian"
    learner: str = "bo"  # or "rl"
    sigma_mut: float = 0.1
    # Gaussian noise on inherited Lamarckian parameters; 0 keeps them verbatim
    lamarckian_sigma: float = 0.0
    seed: int = 0
    schedule: EnvSchedule = field(default_factory=EnvSchedule)
    bo: BOConfig = field(default_factory=BOConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    # which parameter vectors go into evals.jsonl: "all", "best" or "none"
    store_theta_bo: str = "all"
    store_theta_rl: str = "best"
    jobs: int = 1

    @property
    def sensor_mode(self) -> SensorMode:
        return self.schedule.sensor_mode

    def validate(self) -> "EvoConfig":
        positive = ("pop_size", "n_offspring", "tournament_size", "generations", "jobs")
        for name in positive:
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(name, "must be an integer >= 1")
        if self.inheritance not in ("darwinian", "lamarckian"):
            raise ConfigError("inheritance", "must be 'darwinian' or 'lamarckian'")
        if self.learner not in ("bo", "rl"):
            raise ConfigError("learner", "must be 'bo' or 'rl'")
        if self.sigma_mut < 0:
            raise ConfigError("sigma_mut", "must be >= 0")
        if self.lamarckian_sigma < 0:
            raise ConfigError("lamarckian_sigma", "must be >= 0")
        for name in ("store_theta_bo", "store_theta_rl"):
            if getattr(self, name) not in ("all", "best", "none"):
                raise ConfigError(name, "must be 'all', 'best' or 'none'")
        return self


@dataclass(frozen=True)
class ExperimentConfig(EvoConfig):
    runs: int = 1
    out_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        super().validate()
        if not isinstance(self.runs, int) or self.runs < 1:
            raise ConfigError("runs", "must be an integer >= 1")
        return self


_NESTED = {"schedule": EnvSchedule, "bo": BOConfig, "rl": RLConfig, "sim": SimConfig}


def _build(cls, data: dict, prefix: str = ""):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(prefix + name, "unknown configuration key")
    kwargs = {}
    for key, value in data.items():
        if key in _NESTED and cls in (EvoConfig, ExperimentConfig):
            if not isinstance(value, dict):
                raise ConfigError(prefix + key, "must be an object")
            kwargs[key] = _build(_NESTED[key], value, prefix + key + ".")
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix.rstrip(".") or cls.__name__, str(exc)) from exc


def config_from_dict(data: dict, cls=ExperimentConfig):
    data = dict(data)
    data.pop("schema_version", None)
    return _build(cls, data).validate()


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be an object")
    return config_from_dict(data)


def config_to_dict(config) -> dict:
    def convert(value):
        if isinstance(value, SensorMode):
            return value.value
        if dataclasses.is_dataclass(value):
            return {f.name: convert(getattr(value, f.name)) for f in dataclasses.fields(value)}
        if isinstance(value, tuple):
            return [convert(v) for v in value]
        return value

    out = {"schema_version": SCHEMA_VERSION}
    out.update(convert(config))
    return out


def dump_config(config) -> str:
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n"
