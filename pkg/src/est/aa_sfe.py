"""Attention-augmented snippet feature extraction.

Frames of a snippet are encoded independently, refined by single-head
self-attention across the snippet, and then collapsed into one vector by
re-weighting each frame with its cosine similarity to the coordinate-wise
maximum over frames.

All functions accept arbitrary leading batch axes: frame features are
``(..., J, d)`` and snippet features ``(..., d)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from . import tensor as T
from .errors import DimensionError
from .layers import Params, add_linear, apply_linear
from .tensor import Tensor

AGG_EPS = 1e-8


@dataclass(frozen=True)
class FrameEncoderConfig:
    height: int = 32
    width: int = 32
    channels: int = 1
    kind: str = "conv"               # "conv" or "linear"
    conv_channels: tuple[int, int] = (4, 8)
    downsample: int = 4              # pooling factor for the linear kind

    def __post_init__(self):
        if self.kind not in ("conv", "linear"):
            raise ValueError(f"unknown frame encoder kind {self.kind!r}")
        factor = 4 if self.kind == "conv" else self.downsample
        if self.height % factor or self.width % factor:
            raise ValueError(f"frame {self.height}x{self.width} not divisible by {factor}")

    @property
    def flat_width(self) -> int:
        if self.kind == "conv":
            return (self.height // 4) * (self.width // 4) * self.conv_channels[1]
        return (self.height // self.downsample) * (self.width // self.downsample) * self.channels


INPUT_SCALE = 4.0  # brings centred [0, 1] pixels to roughly unit spread


def center_frames(frames: Tensor) -> Tensor:
    """Subtract each frame's mean intensity and rescale by ``INPUT_SCALE``.

    Without this the shared grey level dominates every frame feature and
    training sits at the uniform prediction for many epochs.
    """
    return (frames - T.mean(frames, axis=(-3, -2, -1), keepdims=True)) * INPUT_SCALE


class FrameEncoder:
    """Per-frame encoder mapping an H x W x C frame to a d-vector."""

    def __init__(self, cfg: FrameEncoderConfig, d: int, params: Params,
                 rng: np.random.Generator, prefix: str = "frame"):
        self.cfg, self.d, self.params, self.prefix = cfg, d, params, prefix
        if cfg.kind == "conv":
            c1, c2 = cfg.conv_channels
            add_linear(params, f"{prefix}.conv1", 9 * cfg.channels, c1, rng)
            add_linear(params, f"{prefix}.conv2", 9 * c1, c2, rng)
        add_linear(params, f"{prefix}.proj", cfg.flat_width, d, rng)

    def __call__(self, frames) -> Tensor:
        frames = T.as_tensor(frames)
        cfg = self.cfg
        if frames.shape[-3:] != (cfg.height, cfg.width, cfg.channels):
            raise DimensionError(f"frame geometry {frames.shape[-3:]} does not match encoder "
                                 f"{(cfg.height, cfg.width, cfg.channels)}")
        lead = frames.shape[:-3]
        x = T.reshape(center_frames(frames), (-1, cfg.height, cfg.width, cfg.channels))
        p = self.params
        if cfg.kind == "conv":
            for stage in ("conv1", "conv2"):
                x = T.conv2d(x, p[f"{self.prefix}.{stage}.weight"], p[f"{self.prefix}.{stage}.bias"])
                x = T.avg_pool2d(T.relu(x), 2)
        else:
            x = T.avg_pool2d(x, cfg.downsample)
        x = T.reshape(x, (x.shape[0], -1))
        out = apply_linear(p, f"{self.prefix}.proj", x)
        return T.reshape(out, lead + (self.d,))


def encode_frames(frames, encoder: FrameEncoder) -> Tensor:
    """``(..., J, H, W, C)`` frames to ``(..., J, d)`` features, row order kept."""
    return encoder(frames)


def intra_snippet_attention(I: Tensor, params: Params, prefix: str = "sfe") -> tuple[Tensor, Tensor]:
    """Self-attention across the frames of each snippet; returns ``(I', weights)``."""
    q = apply_linear(params, f"{prefix}.q", I)
    k = apply_linear(params, f"{prefix}.k", I)
    v = apply_linear(params, f"{prefix}.v", I)
    return F.scaled_dot_attention(q, k, v)


def global_vector(I_prime: Tensor) -> Tensor:
    return T.tmax(I_prime, axis=-2)


def frame_weights(I_prime: Tensor, ghat: Tensor) -> Tensor:
    """Cosine similarity of every frame feature to the snippet's global vector."""
    return F.cosine_similarity(I_prime, T.reshape(ghat, ghat.shape[:-1] + (1, ghat.shape[-1])))


def aggregate(I_prime: Tensor, alpha: Tensor) -> Tensor:
    """sum_j alpha_j I'_j / sum_j alpha_j; a vanishing denominator is floored at AGG_EPS."""
    I_prime, alpha = T.as_tensor(I_prime), T.as_tensor(alpha)
    num = T.tsum(I_prime * T.reshape(alpha, alpha.shape + (1,)), axis=-2)
    den = T.tsum(alpha, axis=-1)
    small = np.abs(den.data) < AGG_EPS
    if np.any(small):
        den = den + Tensor(np.where(small, np.where(den.data < 0, -AGG_EPS, AGG_EPS) - den.data, 0.0))
    return num / T.reshape(den, den.shape + (1,))


class AASFE:
    def __init__(self, enc_cfg: FrameEncoderConfig, d: int, params: Params,
                 rng: np.random.Generator):
        self.encoder = FrameEncoder(enc_cfg, d, params, rng)
        self.params = params
        add_linear(params, "sfe.q", d, d, rng)
        add_linear(params, "sfe.k", d, d, rng, bias=False)
        add_linear(params, "sfe.v", d, d, rng)

    def __call__(self, frames) -> Tensor:
        return extract_snippet_features(frames, self)[0]


def extract_snippet_features(frames, sfe: AASFE) -> tuple[Tensor, Tensor]:
    """``(..., n, J, H, W, C)`` snippet frames to ``(R, alpha)`` with R ``(..., n, d)``."""
    I = encode_frames(frames, sfe.encoder)
    I_prime, _ = intra_snippet_attention(I, sfe.params)
    alpha = frame_weights(I_prime, global_vector(I_prime))
    return aggregate(I_prime, alpha), alpha
