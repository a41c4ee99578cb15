"""Synthetic expression videos.

Each class is a faint Gaussian blob that starts near the frame centre and
drifts outward along a class-specific direction while its contrast either
rises or falls over time. Direction and ramp sense together identify the
class, so a class can be read from (position, brightness) pairs, and the
distance from the centre also reveals where a frame sits in time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .container import Dataset
from .pipeline import Video


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 7
    per_class: int = 100
    height: int = 32
    width: int = 32
    channels: int = 1
    frames: int = 105
    background: float = 0.4
    amp_low: float = 0.08
    amp_high: float = 0.28
    drift: float = 8.0          # pixels travelled over the whole video
    sigma: float = 2.5          # blob radius in pixels
    noise: float = 0.05         # std of i.i.d. pixel noise
    jitter: float = 1.0         # per-video start offset, pixels


def class_pattern(label: int, num_classes: int) -> tuple[float, bool]:
    """(drift angle in radians, rising contrast?) for a class."""
    n_dirs = math.ceil(num_classes / 2)
    return 2 * math.pi * (label // 2) / n_dirs, label % 2 == 0


def render_video(label: int, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    angle, rising = class_pattern(label, cfg.num_classes)
    t = np.linspace(0.0, 1.0, cfg.frames)
    travel = cfg.drift * rng.uniform(0.85, 1.15)
    cy = (cfg.height - 1) / 2 + rng.uniform(-cfg.jitter, cfg.jitter)
    cx = (cfg.width - 1) / 2 + rng.uniform(-cfg.jitter, cfg.jitter)
    ys = cy - travel * t * math.sin(angle)
    xs = cx + travel * t * math.cos(angle)
    lo = cfg.amp_low * rng.uniform(0.9, 1.1)
    hi = cfg.amp_high * rng.uniform(0.9, 1.1)
    amp = lo + (hi - lo) * t if rising else hi + (lo - hi) * t

    yy = np.arange(cfg.height)[None, :, None]
    xx = np.arange(cfg.width)[None, None, :]
    d2 = (yy - ys[:, None, None]) ** 2 + (xx - xs[:, None, None]) ** 2
    frames = cfg.background + amp[:, None, None] * np.exp(-d2 / (2 * cfg.sigma ** 2))
    frames = np.repeat(frames[..., None], cfg.channels, axis=3)
    if cfg.noise > 0:
        frames = frames + rng.normal(0.0, cfg.noise, frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


def synth_dataset(cfg: SynthConfig = SynthConfig(), seed: int = 0) -> Dataset:
    """``cfg.per_class`` videos per class, interleaved by class, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    videos = []
    for i in range(cfg.per_class):
        for label in range(cfg.num_classes):
            vid = len(videos)
            videos.append(Video(render_video(label, cfg, rng), label, vid))
    return Dataset(videos, cfg.num_classes)
