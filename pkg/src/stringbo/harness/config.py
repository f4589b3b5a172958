"""JSON configuration documents.  Unknown keys are rejected."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from ..acquisition import AcquisitionConfig
from ..embedder import EmbedderConfig
from ..pretrain import PretrainConfig
from ..regressor import RegressorConfig
from .loop import Algorithm


class ConfigError(ValueError):
    pass


def strict(cls, data, where: str):
    """Build dataclass ``cls`` from a mapping, refusing unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a JSON object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


@dataclass
class RunConfig:
    task: dict = field(default_factory=dict)
    algorithm: str = "ETR"
    budget: int = 50
    repeats: int = 10
    seed: int = 0
    checkpoint: str | None = None
    out_dir: str | None = None
    acquisition: dict = field(default_factory=dict)
    embedder: dict = field(default_factory=dict)
    record_wall_time: bool = False

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm).value
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.task:
            raise ValueError("task is required")


@dataclass
class BenchmarkConfig:
    suite: str = "bbob"
    algorithms: list | None = None
    budget: int | None = None
    repeats: int = 10
    seed: int = 0
    checkpoint: str | None = None
    functions: list | None = None
    kinds: list | None = None
    dims: list = field(default_factory=lambda: [2, 4])
    acquisition: dict = field(default_factory=dict)
    embedder: dict = field(default_factory=dict)
    record_wall_time: bool = False

    def __post_init__(self):
        if self.suite not in ("bbob", "combo"):
            raise ValueError(f"suite must be 'bbob' or 'combo', got {self.suite!r}")
        if self.algorithms is None:
            self.algorithms = ["ETR", "RANDOM"] if self.suite == "bbob" else ["REGEVO_ETR", "REGEVO"]
        self.algorithms = [Algorithm(a).value for a in self.algorithms]
        if self.budget is None:
            self.budget = 50 if self.suite == "bbob" else 100
        if self.budget < 1 or self.repeats < 1:
            raise ValueError("budget and repeats must be >= 1")


@dataclass
class PretrainJob:
    pretrain: dict = field(default_factory=dict)
    regressor: dict = field(default_factory=dict)
    checkpoint: str = "regressor.etrr"
    dataset: str | None = None


@dataclass
class GenDataJob:
    pretrain: dict = field(default_factory=dict)
    output: str = "tasks.etrd"


def acquisition_config(data) -> AcquisitionConfig:
    return strict(AcquisitionConfig, data, "acquisition")


def embedder_config(data) -> EmbedderConfig:
    return strict(EmbedderConfig, data, "embedder")


def pretrain_config(data) -> PretrainConfig:
    return strict(PretrainConfig, data, "pretrain")


def regressor_config(data) -> RegressorConfig:
    return strict(RegressorConfig, data, "regressor")
