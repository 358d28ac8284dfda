"""Run configuration: one JSON document with model, loss, optimizer, data and split settings."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig
from .training import TrainConfig

_OPTIMIZER_KEYS = ("epochs", "lr", "min_lr", "weight_decay", "warmup_epochs", "grad_clip", "betas", "eps",
                   "samples_per_epoch", "val_samples", "log_every")


@dataclass
class DataConfig:
    path: str | None = None
    points: int = 256
    days: int = 2000
    width: int = 24
    height: int = 24
    history_years: int = 10
    start: str = "2000-01-01"


@dataclass
class SplitConfig:
    fractions: list = field(default_factory=lambda: [0.6, 0.15, 0.25])


@dataclass
class LossConfig:
    alpha: float = 0.25


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: dict = field(default_factory=dict)
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    seed: int = 0

    def train_config(self) -> TrainConfig:
        opt = dict(self.optimizer)
        if "betas" in opt:
            opt["betas"] = tuple(opt["betas"])
        return TrainConfig(alpha=self.loss.alpha, seed=self.seed, **opt)

    def to_dict(self) -> dict:
        tc = dataclasses.asdict(self.train_config())
        return {"model": self.model.to_dict(), "loss": dataclasses.asdict(self.loss),
                "optimizer": {k: (list(tc[k]) if k == "betas" else tc[k]) for k in _OPTIMIZER_KEYS},
                "data": dataclasses.asdict(self.data), "split": dataclasses.asdict(self.split), "seed": self.seed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _reject_unknown(d, {"model", "loss", "optimizer", "data", "split", "seed"}, "run config")
        opt = dict(d.get("optimizer", {}))
        _reject_unknown(opt, set(_OPTIMIZER_KEYS), "optimizer")
        loss = d.get("loss", {})
        _reject_unknown(loss, {"alpha"}, "loss")
        if loss.get("alpha", 0.25) < 0:
            raise ValueError("loss.alpha must be >= 0")
        data = d.get("data", {})
        _reject_unknown(data, {f.name for f in dataclasses.fields(DataConfig)}, "data")
        split = d.get("split", {})
        _reject_unknown(split, {"fractions"}, "split")
        cfg = cls(ModelConfig.from_dict(d.get("model", {})), LossConfig(**loss), opt, DataConfig(**data),
                  SplitConfig(**split), int(d.get("seed", 0)))
        cfg.train_config()  # validates optimizer values
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(d)


def _reject_unknown(d, known, where):
    if not isinstance(d, dict):
        raise ValueError(f"{where} must be a JSON object")
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ValueError(f"unknown {where} keys: {', '.join(unknown)}")
