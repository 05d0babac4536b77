"""Run configuration: nested dataclasses loaded from JSON and validated up front."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .cascade import ModelConfig
from .objectives import LossWeights
from .synthetic import SyntheticConfig

# default (lambda_rec, lambda_mse, lambda_rhy) cells for the loss-weight sweep
ABLATION_GRID: tuple[tuple[float, float, float], ...] = (
    (500, 500, 500),
    (1000, 500, 500),
    (1000, 500, 100),
    (500, 1000, 100),
    (1000, 500, 10),
    (500, 1000, 10),
    (1000, 500, 1),
    (500, 1000, 1),
)


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    manifest: str | None = None  # training data; synthetic when None
    eval_manifest: str | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    eval_sequences: int = 4  # synthetic held-out draw
    clip_frames: int = 34
    stride: int = 10
    seed_frames: int = 4


@dataclass
class OptimConfig:
    lr: float = 0.00025
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    steps: int = 1000
    patience: int = 50
    tolerance: float = 1e-4
    checkpoint_every: int = 0  # 0 disables periodic checkpoints


@dataclass
class ClassifierConfig:
    hidden: int = 64
    steps: int = 200
    lr: float = 1e-3
    batch_size: int = 16


@dataclass
class EvalConfig:
    embedder_latent: int = 32
    embedder_hidden: int = 64
    embedder_steps: int = 300
    embedder_lr: float = 2e-3
    srgr_delta: float = 5.0
    beat_sigma: float = 0.2
    use_classifier_labels: bool = True


@dataclass
class SweepConfig:
    grid: list[list[float]] = field(default_factory=lambda: [list(c) for c in ABLATION_GRID])
    steps: int | None = None  # per-cell training steps; falls back to optim.steps


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    optim: OptimConfig = field(default_factory=OptimConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 0
    out_dir: str = "runs/default"

    def validate(self) -> "RunConfig":
        try:
            self.data.synthetic.validate()
            self.model.validate()
            self.loss.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        d, o = self.data, self.optim
        checks = [
            (d.clip_frames >= 1 and d.stride >= 1, "data.clip_frames and data.stride must be >= 1"),
            (0 <= d.seed_frames <= d.clip_frames, "data.seed_frames must lie in 0..clip_frames"),
            (d.seed_frames == self.model.seed_frames, "data.seed_frames must equal model.seed_frames"),
            (d.eval_sequences >= 1, "data.eval_sequences must be >= 1"),
            (o.lr > 0 and o.eps > 0, "optim.lr and optim.eps must be > 0"),
            (0 <= o.beta1 < 1 and 0 <= o.beta2 < 1, "optim betas must lie in [0, 1)"),
            (o.batch_size >= 1 and o.steps >= 1, "optim.batch_size and optim.steps must be >= 1"),
            (o.patience >= 1 and o.tolerance >= 0, "optim.patience >= 1 and optim.tolerance >= 0"),
            (self.classifier.steps >= 1 and self.classifier.lr > 0, "classifier.steps >= 1 and classifier.lr > 0"),
            (self.eval.embedder_steps >= 1, "eval.embedder_steps must be >= 1"),
            (self.eval.srgr_delta > 0 and self.eval.beat_sigma > 0, "eval.srgr_delta and eval.beat_sigma must be > 0"),
            (all(len(c) == 3 and min(c) >= 0 for c in self.sweep.grid), "sweep.grid cells must be 3 non-negative weights"),
            (self.seed >= 0, "seed must be >= 0"),
        ]
        if self.data.manifest is None:
            syn = self.data.synthetic
            checks += [
                (syn.n_speakers == self.model.n_speakers, "model.n_speakers must match data.synthetic.n_speakers"),
                (syn.audio_dim == self.model.audio_dim, "model.audio_dim must match data.synthetic.audio_dim"),
                (syn.text_dim == self.model.text_dim, "model.text_dim must match data.synthetic.text_dim"),
                (syn.face_dim == self.model.face_dim, "model.face_dim must match data.synthetic.face_dim"),
            ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _build(cls, values: Any, where: str):
    if not dataclasses.is_dataclass(cls):
        return values
    if not isinstance(values, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    nested = {"data": DataConfig, "model": ModelConfig, "loss": LossWeights, "optim": OptimConfig,
              "classifier": ClassifierConfig, "eval": EvalConfig, "sweep": SweepConfig, "synthetic": SyntheticConfig}
    for k, v in values.items():
        sub = nested.get(k)
        kwargs[k] = _build(sub, v, f"{where}.{k}") if sub is not None and v is not None else v
    for k in ("beat_period", "emotions", "speakers"):
        if isinstance(kwargs.get(k), list):
            kwargs[k] = tuple(kwargs[k])
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from e


def config_from_dict(values: dict) -> RunConfig:
    return _build(RunConfig, values, "config").validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        values = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    return config_from_dict(values)


def desk_config(**overrides) -> RunConfig:
    """Small widths and a faster learning rate for CPU runs of a few hundred steps."""
    cfg = RunConfig(
        data=DataConfig(synthetic=SyntheticConfig(n_sequences=32, frames_per_sequence=120), eval_sequences=8),
        model=ModelConfig(latent=32, enc_hidden=32, style_dim=32, lstm_hidden=64, mlp_hidden=64),
        optim=OptimConfig(lr=3e-3, steps=400, batch_size=16),
        classifier=ClassifierConfig(hidden=32, steps=150, lr=3e-3),
        eval=EvalConfig(embedder_latent=16, embedder_hidden=32, embedder_steps=200),
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg.validate()
