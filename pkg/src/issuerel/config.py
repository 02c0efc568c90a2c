"""Run configuration: TOML file plus command-line overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .elicitation import EndpointConfig
from .evaluation import DEFAULT_GRID
from .stability import StabilityConfig

BUNDLED = "bundled"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("issuerel.data").joinpath(name)))


@dataclass
class Paths:
    corpus: str = BUNDLED
    annotations: str = BUNDLED
    candidates: str = "artifacts/candidates.jsonl"
    pool: str = "artifacts/pool.jsonl"
    matrix: str = "artifacts/scores.csv"
    journal: str = "artifacts/scores.journal.jsonl"
    models: str = "artifacts/models"
    reports: str = "reports"


@dataclass
class ElicitSettings:
    k: int = 8
    incremental: bool = True
    baseline_samples: int = 1
    max_inflight: int = 4
    prompts_dir: str = ""


@dataclass
class Experiment:
    methods: list = field(default_factory=lambda: ["LR_L1", "SVC_L1", "LR_L2", "SVC_L2", "RIDGE", "LDA", "KNN"])
    train_methods: list = field(default_factory=lambda: ["LR_L1", "SVC_L1", "LR_L2"])
    grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    knn_grid: list = field(default_factory=lambda: [1, 3, 5, 7, 9])
    folds: int = 5
    seed: int = 42


@dataclass
class StabilitySettings:
    methods: list = field(default_factory=lambda: ["logistic", "svc"])
    n_bootstrap: int = 100
    subsample_frac: float = 0.6
    thresholds: list = field(default_factory=lambda: [0.3, 0.4, 0.5, 0.6])
    inner_folds: int = 5
    min_stability: int = 3

    def to_config(self, seed: int) -> StabilityConfig:
        return StabilityConfig(self.n_bootstrap, self.subsample_frac, tuple(self.thresholds), seed)


@dataclass
class DiversitySettings:
    orders: list = field(default_factory=lambda: [3, 4, 5])
    own_embeddings: str = ""
    reference_embeddings: str = ""


SECTIONS = {
    "paths": Paths,
    "endpoint": EndpointConfig,
    "elicit": ElicitSettings,
    "experiment": Experiment,
    "stability": StabilitySettings,
    "diversity": DiversitySettings,
}


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    elicit: ElicitSettings = field(default_factory=ElicitSettings)
    experiment: Experiment = field(default_factory=Experiment)
    stability: StabilitySettings = field(default_factory=StabilitySettings)
    diversity: DiversitySettings = field(default_factory=DiversitySettings)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        parts = {}
        for name, kind in SECTIONS.items():
            values = dict(data.get(name, {}))
            known = {f.name: f for f in dataclasses.fields(kind)}
            bad = set(values) - set(known)
            if bad:
                raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(bad))}")
            for key, value in values.items():
                values[key] = _coerce(name, key, value, getattr(kind(), key))
            try:
                parts[name] = kind(**values)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}] {exc}") from None
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.elicit.k < 1:
            raise ConfigError("[elicit] k must be >= 1")
        if self.experiment.folds < 2:
            raise ConfigError("[experiment] folds must be >= 2")
        if not self.experiment.grid or any(c <= 0 for c in self.experiment.grid):
            raise ConfigError("[experiment] grid must hold positive strengths")
        try:
            self.stability.to_config(self.experiment.seed)
        except ValueError as exc:
            raise ConfigError(f"[stability] {exc}") from None

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from None

    @classmethod
    def load(cls, path: Optional[str | Path]) -> "RunConfig":
        if path is None:
            return cls()
        try:
            return cls.from_toml(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, section: str, **changes) -> "RunConfig":
        data = self.to_dict()
        data[section].update(changes)
        return RunConfig.from_dict(data)

    def corpus_path(self) -> Path:
        return bundled_path("synthetic_cases.jsonl") if self.paths.corpus == BUNDLED else Path(self.paths.corpus)

    def annotations_path(self) -> Optional[Path]:
        if self.paths.annotations == BUNDLED:
            return bundled_path("synthetic_annotations.csv")
        return Path(self.paths.annotations) if self.paths.annotations else None


def _coerce(section, key, value, default):
    """Check a TOML value against the type of the field default."""
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
        if ok and default and isinstance(default[0], float):
            value = [float(v) for v in value]
    else:
        ok = True
    if not ok:
        raise ConfigError(f"[{section}] {key}: expected {type(default).__name__}, got {value!r}")
    return value
