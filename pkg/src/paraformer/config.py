"""Run configuration: a strict JSON document with four sections.

Defaults mirror the published v1 setup (embedding 256, 6 layers, 4 heads,
batch 512, AdamW, plateau schedule with patience 10 and factor 0.5, learning
rate 1e-4, 200 epochs, window 5). Unknown keys are rejected so a typo never
silently falls back to a default.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .nn import ACTIVATIONS, MlpConfig, ModelConfig
from .optim import OPTIMIZERS, SCHEDULERS, TrainRun


@dataclass
class ModelSection:
    kind: str = "paraformer"
    d_model: int = 256
    n_layers: int = 6
    n_heads: int = 4
    ffn_mult: int = 4
    dropout: float = 0.1
    window: int = 5
    mlp_hidden: list = field(default_factory=lambda: [512] * 5)
    mlp_activation: str = "leaky_relu"


@dataclass
class TrainSection:
    epochs: int = 200
    lr: float = 1e-4
    batch: int = 512
    optimizer: str = "adamw"
    scheduler: str = "plateau"
    seed: int = 0
    patience: int = 10
    factor: float = 0.5
    weight_decay: Optional[float] = None
    max_grad_norm: Optional[float] = None


@dataclass
class DataSection:
    path: Optional[str] = None
    stride: int = 1
    train_frac: float = 0.7
    val_frac: float = 0.1
    window_mode: str = "nonoverlap"


@dataclass
class EvalSection:
    lat_bins: int = 24
    report: str = "report.json"
    svg_dir: Optional[str] = None
    levels: list = field(default_factory=lambda: [1, 25, 40, 59])
    scatter_bins: int = 80


_SECTIONS = {"model": ModelSection, "train": TrainSection, "data": DataSection, "eval": EvalSection}


def _coerce(section: str, f, value):
    key = f"{section}.{f.name}"
    t = f.type
    if value is None:
        if t.startswith("Optional"):
            return None
        raise ConfigError(f"{key} must not be null")
    try:
        if t in ("int", "Optional[int]"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if t in ("float", "Optional[float]"):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if t in ("str", "Optional[str]"):
            if not isinstance(value, str):
                raise TypeError
            return value
        if t == "list":
            if not isinstance(value, list):
                raise TypeError
            return list(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: bad value {value!r} (expected {t})") from None
    return value


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(doc) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        sections = {}
        for name, klass in _SECTIONS.items():
            raw = doc.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"section {name!r} must be an object")
            known = {f.name: f for f in fields(klass)}
            bad = sorted(set(raw) - set(known))
            if bad:
                raise ConfigError(f"unknown config key {name}.{bad[0]!r}")
            sections[name] = klass(**{k: _coerce(name, known[k], v) for k, v in raw.items()})
        cfg = cls(**sections)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def validate(self):
        m, t, d, e = self.model, self.train, self.data, self.eval
        if m.kind not in ("paraformer", "mlp"):
            raise ConfigError(f"model.kind must be 'paraformer' or 'mlp', got {m.kind!r}")
        if m.mlp_activation not in ACTIVATIONS:
            raise ConfigError(f"model.mlp_activation: unknown activation {m.mlp_activation!r}")
        if t.optimizer not in OPTIMIZERS:
            raise ConfigError(f"train.optimizer must be one of {OPTIMIZERS}")
        if t.scheduler not in SCHEDULERS:
            raise ConfigError(f"train.scheduler must be one of {SCHEDULERS}")
        if t.epochs < 0 or t.batch < 1 or t.lr < 0:
            raise ConfigError("train.epochs >= 0, train.batch >= 1 and train.lr >= 0 required")
        if d.window_mode not in ("sliding", "nonoverlap"):
            raise ConfigError("data.window_mode must be 'sliding' or 'nonoverlap'")
        if d.stride < 1:
            raise ConfigError("data.stride must be >= 1")
        if e.lat_bins < 1 or e.scatter_bins < 1:
            raise ConfigError("eval.lat_bins and eval.scatter_bins must be >= 1")

    @property
    def window(self) -> int:
        return 1 if self.model.kind == "mlp" else self.model.window

    def model_config(self, f_in: int, f_out: int):
        m = self.model
        if m.kind == "mlp":
            return MlpConfig(f_in=f_in, f_out=f_out, hidden_widths=m.mlp_hidden,
                             activation=m.mlp_activation)
        return ModelConfig(d_model=m.d_model, n_layers=m.n_layers, n_heads=m.n_heads,
                           f_in=f_in, f_out=f_out, ffn_mult=m.ffn_mult, dropout=m.dropout,
                           window=m.window)

    def train_run(self) -> TrainRun:
        t = self.train
        return TrainRun(epochs=t.epochs, lr=t.lr, batch_size=t.batch, seed=t.seed,
                        optimizer=t.optimizer, scheduler=t.scheduler,
                        weight_decay=t.weight_decay, patience=t.patience, factor=t.factor,
                        max_grad_norm=t.max_grad_norm)
