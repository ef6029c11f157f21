"""Declarative experiment configuration (JSON)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import RegressorSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "VARIANTS"]

# variant -> (model kind, trick); suffix 1 = ReLU trick, 2 = abs trick
VARIANTS = {
    "ilstm1": ("lstm", "relu"),
    "ilstm2": ("lstm", "abs"),
    "inode1": ("node", "relu"),
    "inode2": ("node", "abs"),
}


class ConfigError(ValueError):
    pass


def _build(cls, d, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**d)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


@dataclass
class DatasetConfig:
    path: str
    N: int
    split: list
    normalization: str = "z-score"
    u_column: str = "u"
    y_column: str = "y"
    eval_mode: str = "windows"

    def __post_init__(self):
        if self.normalization not in ("z-score", "min-max", "none"):
            raise ConfigError(f"dataset.normalization: unknown method {self.normalization!r}")
        if len(self.split) != 3:
            raise ConfigError("dataset.split needs three percentages")
        if not isinstance(self.N, int) or self.N < 1:
            raise ConfigError(f"dataset.N must be a positive integer, got {self.N!r}")
        if self.eval_mode not in ("sequence", "windows"):
            raise ConfigError(f"dataset.eval_mode must be 'sequence' or 'windows', got {self.eval_mode!r}")


@dataclass
class ModelConfig:
    regressor: list
    hidden: list
    activation: str = "tanh"
    r_o: float = 1.0
    r_h: float = 1.0
    freeze_recurrent: bool = False

    def __post_init__(self):
        try:
            RegressorSpec(*self.regressor)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"regressor: {e}") from None
        if not all(isinstance(h, int) and h > 0 for h in self.hidden):
            raise ConfigError(f"hidden sizes must be positive integers, got {self.hidden}")
        for name in ("r_o", "r_h"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")

    @property
    def spec(self) -> RegressorSpec:
        return RegressorSpec(*self.regressor)


@dataclass
class CrispConfig:
    epochs: int = 300
    mbs: int = 64
    lr: float = 1e-3


@dataclass
class UQConfig:
    alphas: list = field(default_factory=lambda: [0.9, 0.95])
    lam: float = 0.005
    epochs: int = 200
    mbs: int = 64
    lr: float = 1e-3

    def __post_init__(self):
        if not self.alphas or not all(0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError(f"uq.alphas must lie in (0, 1), got {self.alphas}")
        if self.lam < 0:
            raise ConfigError("uq.lam must be nonnegative")


@dataclass
class ExperimentConfig:
    name: str
    dataset: DatasetConfig
    models: dict
    crisp_training: CrispConfig = field(default_factory=CrispConfig)
    uq: UQConfig = field(default_factory=UQConfig)
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs"
    base_dir: str = field(default=".", compare=False, repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {"name", "dataset", "models", "crisp_training", "uq", "seeds", "output_dir"}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ConfigError(f"unknown top-level keys {unknown}")
        for req in ("name", "dataset", "models"):
            if req not in d:
                raise ConfigError(f"missing required key {req!r}")
        models = d["models"]
        if not isinstance(models, dict) or not models or set(models) - {"node", "lstm"}:
            raise ConfigError("models must map 'node' and/or 'lstm' to model blocks")
        cfg = cls(
            name=str(d["name"]),
            dataset=_build(DatasetConfig, d["dataset"], "dataset"),
            models={k: _build(ModelConfig, v, f"models.{k}") for k, v in models.items()},
            crisp_training=_build(CrispConfig, d.get("crisp_training", {}), "crisp_training"),
            uq=_build(UQConfig, d.get("uq", {}), "uq"),
            seeds=list(d.get("seeds", [0])),
            output_dir=str(d.get("output_dir", "runs")),
            base_dir=str(base_dir),
        )
        if not cfg.seeds or not all(isinstance(s, int) for s in cfg.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def resolve(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def data_path(self) -> Path:
        return self.resolve(self.dataset.path)

    @property
    def out_path(self) -> Path:
        return self.resolve(self.output_dir)

    def model(self, kind: str) -> ModelConfig:
        if kind not in self.models:
            raise ConfigError(f"config has no {kind!r} model block")
        return self.models[kind]


def load_config(path, check_paths: bool = True) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    cfg = ExperimentConfig.from_dict(d, base_dir=path.parent)
    if check_paths and not cfg.data_path.is_file():
        raise ConfigError(f"dataset file not found: {cfg.data_path}")
    return cfg
