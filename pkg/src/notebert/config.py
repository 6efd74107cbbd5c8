"""Run configuration: one JSON document, overridable field by field."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .encoder import EncoderConfig
from .pretrain import PretrainSchedule, Stage


def desk_encoder() -> EncoderConfig:
    return EncoderConfig(num_layers=4, num_heads=4, model_dim=128, ff_dim=512, max_seq_len=128, vocab_size=600)


def desk_stages() -> list[Stage]:
    return [Stage(64, 1000, 16), Stage(128, 200, 8)]


@dataclass
class PretrainSettings:
    stages: list[Stage] = field(default_factory=desk_stages)
    learning_rate: float = 1e-3
    eval_interval: int = 100
    eval_pairs: int = 200
    holdout: float = 0.1
    mask_rate: float = 0.15

    def schedule(self, seed: int) -> PretrainSchedule:
        return PretrainSchedule([s if isinstance(s, Stage) else Stage(**s) for s in self.stages],
                                self.learning_rate, seed, self.eval_interval, self.eval_pairs, self.holdout,
                                self.mask_rate)


@dataclass
class FinetuneSettings:
    epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 1e-3
    head_mode: str = "mlp"
    c: float = 2.0
    mode: str | int = "discharge"


@dataclass
class Paths:
    notes: str = "notes.jsonl"
    admissions: str = "admissions.jsonl"
    vocab: str = "vocab.txt"
    pretrained: str = "pretrained.ckpt"
    finetuned: str = "finetuned.ckpt"
    metrics_log: str = "pretrain_metrics.csv"
    predictions: str = "predictions.csv"
    baseline_predictions: str = "baseline_predictions.csv"

    def resolve(self, base: Path) -> "Paths":
        return Paths(**{f.name: str(base / getattr(self, f.name)) for f in fields(self)})


WRITTEN = ("vocab", "pretrained", "finetuned", "metrics_log", "predictions", "baseline_predictions")


@dataclass
class RunConfig:
    seed: int
    fold: int = 0
    num_folds: int = 5
    vocab_size: int = 600
    encoder: EncoderConfig = field(default_factory=desk_encoder)
    pretrain: PretrainSettings = field(default_factory=PretrainSettings)
    finetune: FinetuneSettings = field(default_factory=FinetuneSettings)
    paths: Paths = field(default_factory=Paths)

    def __post_init__(self):
        if not 0 <= self.fold < self.num_folds:
            raise ValueError(f"fold {self.fold} outside 0..{self.num_folds - 1}")
        written = [getattr(self.paths, k) for k in WRITTEN]
        if len(set(written)) != len(written):
            raise ValueError("output paths must be distinct")
        if self.finetune.mode not in ("discharge", 48, 72):
            raise ValueError(f"finetune.mode must be 'discharge', 48 or 72, got {self.finetune.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown config key(s) in {where or 'top level'}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        sub = {"encoder": EncoderConfig, "pretrain": PretrainSettings, "finetune": FinetuneSettings,
               "paths": Paths}.get(name) if cls is RunConfig else None
        if sub is not None:
            kwargs[name] = _build(sub, value, name)
        elif cls is PretrainSettings and name == "stages":
            kwargs[name] = [Stage(**s) for s in value]
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    if "seed" not in data:
        raise ValueError("config must set a seed")
    return _build(RunConfig, data, "")


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values parse as JSON, else stay strings."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValueError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r}: {p} is not a section")
        node[parts[-1]] = value
    return data


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    """Read a JSON config; relative paths resolve against the config file's directory."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    data = apply_overrides(data, overrides or [])
    cfg = config_from_dict(data)
    cfg.paths = cfg.paths.resolve(path.parent)
    return cfg


def default_config_dict(seed: int = 0) -> dict:
    d = RunConfig(seed).to_dict()
    return json.loads(json.dumps(d, default=lambda o: asdict(o) if is_dataclass(o) else str(o)))
