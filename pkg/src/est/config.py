"""Flat ``key = value`` run configuration.

One key per line, ``#`` starts a comment. Every key has a default and
unknown keys are rejected. The resolved configuration round-trips through
:meth:`RunConfig.to_text`.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError, ValidationError
from .model import ModelConfig
from .pipeline import PipelineConfig
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # model
    d: int = 64
    num_heads: int = 4
    num_encoder_layers: int = 3
    num_decoder_layers: int = 3
    ffn_width: int = 0
    num_classes: int = 7
    height: int = 32
    width: int = 32
    channels: int = 1
    encoder_kind: str = "conv"
    conv1: int = 4
    conv2: int = 8
    downsample: int = 4
    # pipeline
    target_frames: int = 105
    window: int = 75
    start_range: int = 30
    subvideo_len: int = 15
    overlap: int = 5
    n: int = 7
    J: int = 5
    num_shuffle_types: int = 10
    table_seed: int = 0
    # training
    learning_rate: float = 1e-4
    warmup_frac: float = 0.05
    batch_size: int = 8
    epochs: int = 50
    lambda_ssop: float = 1.0
    optimizer: str = "sgd"
    seed: int = 0
    eval_seed: int = 0
    # gradient check
    gradcheck_h: float = 1e-4
    gradcheck_tol: float = 1e-3
    gradcheck_videos: int = 2
    # paths
    train_data: str = ""
    test_data: str = ""
    out_dir: str = "runs/default"

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            d=self.d, n=self.n, J=self.J, num_heads=self.num_heads,
            num_encoder_layers=self.num_encoder_layers,
            num_decoder_layers=self.num_decoder_layers, ffn_width=self.ffn_width,
            num_classes=self.num_classes, num_shuffle_types=self.num_shuffle_types,
            height=self.height, width=self.width, channels=self.channels,
            encoder_kind=self.encoder_kind, conv1=self.conv1, conv2=self.conv2,
            downsample=self.downsample, init_seed=self.seed)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(self.target_frames, self.window, self.start_range,
                              self.subvideo_len, self.overlap, self.n, self.J,
                              self.num_shuffle_types)

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, warmup_frac=self.warmup_frac,
                           batch_size=self.batch_size, epochs=self.epochs,
                           lambda_ssop=self.lambda_ssop, seed=self.seed,
                           optimizer=self.optimizer)

    def validate(self) -> RunConfig:
        try:
            self.model_config()
            self.pipeline_config()
            self.train_config()
        except (ValidationError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def with_overrides(self, pairs) -> RunConfig:
        return dataclasses.replace(self, **_coerce(dict(_split(p, "--set") for p in pairs)))


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _split(line: str, where: str) -> tuple[str, str]:
    if "=" not in line:
        raise ConfigError(f"{where}: expected key=value, got {line!r}")
    key, value = line.split("=", 1)
    return key.strip(), value.strip()


def _coerce(raw: dict[str, str]) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        kind = _TYPES[key]
        try:
            out[key] = int(value) if kind == "int" else float(value) if kind == "float" else value
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from exc
    return out


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = _split(line, f"{source}:{lineno}")
        raw[key] = value
    return RunConfig(**_coerce(raw)).validate()


def load_config(path, overrides=()) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cfg = parse_config(p.read_text(encoding="utf-8"), str(p))
    return cfg.with_overrides(overrides).validate() if overrides else cfg
