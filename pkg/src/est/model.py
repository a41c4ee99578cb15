"""Snippet-level encoder-decoder transformer with FER and order-prediction heads."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from . import tensor as T
from .aa_sfe import AASFE, FrameEncoderConfig, extract_snippet_features
from .errors import ConfigError, DimensionError
from .layers import (Params, add_linear, add_mlp, add_norm, apply_linear, apply_mlp,
                     apply_norm, new_param)
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    n: int = 7
    J: int = 5
    num_heads: int = 4
    num_encoder_layers: int = 3
    num_decoder_layers: int = 3
    ffn_width: int = 0              # 0 means 4 * d
    num_classes: int = 7
    num_shuffle_types: int = 10
    height: int = 32
    width: int = 32
    channels: int = 1
    encoder_kind: str = "conv"
    conv1: int = 4
    conv2: int = 8
    downsample: int = 4
    init_seed: int = 0

    def __post_init__(self):
        if self.d % 2:
            raise ConfigError(f"d={self.d} must be even for sinusoidal positions")
        if self.d % self.num_heads:
            raise ConfigError(f"d={self.d} not divisible by num_heads={self.num_heads}")
        if self.n * self.d % 2:
            raise ConfigError("n * d must be even (order head halves it)")
        try:
            self.frame_encoder
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def ffn(self) -> int:
        return self.ffn_width or 4 * self.d

    @property
    def frame_encoder(self) -> FrameEncoderConfig:
        return FrameEncoderConfig(self.height, self.width, self.channels, self.encoder_kind,
                                  (self.conv1, self.conv2), self.downsample)

    def to_dict(self) -> dict:
        return asdict(self)


def positional_encoding(n: int, d: int) -> np.ndarray:
    """Sinusoidal table: sin on even columns, cos on odd, frequency 10000^(-2i/d)."""
    if d % 2:
        raise ConfigError(f"positional encoding needs even d, got {d}")
    pos = np.arange(n)[:, None]
    div = 10000.0 ** (np.arange(0, d, 2) / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(pos / div)
    pe[:, 1::2] = np.cos(pos / div)
    return pe


def multi_head_attention(params: Params, prefix: str, xq: Tensor, xkv: Tensor,
                         heads: int) -> tuple[Tensor, Tensor]:
    """Returns the projected output ``(B, a, d)`` and weights ``(B, heads, a, b)``."""
    b, a, d = xq.shape
    m = xkv.shape[1]
    dh = d // heads

    def split(x: Tensor, rows: int) -> Tensor:
        return T.swapaxes(T.reshape(x, (b, rows, heads, dh)), 1, 2)

    q = split(apply_linear(params, f"{prefix}.q", xq), a)
    k = split(apply_linear(params, f"{prefix}.k", xkv), m)
    v = split(apply_linear(params, f"{prefix}.v", xkv), m)
    out, weights = F.scaled_dot_attention(q, k, v)
    out = T.reshape(T.swapaxes(out, 1, 2), (b, a, d))
    return apply_linear(params, f"{prefix}.o", out), weights


@dataclass
class ESTOutput:
    probs: Tensor                   # (B, num_classes)
    order_probs: Tensor | None      # (B, num_shuffle_types)
    R: Tensor                       # (B, n, d)
    H: Tensor                       # (B, n, d)
    T: Tensor                       # (B, d)
    cross_attention: np.ndarray     # (B, n), last decoder layer, head-averaged
    alpha: Tensor                   # (B, n, J)


class EST:
    """The full model. ``params`` is an insertion-ordered name -> Tensor store."""

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        self.cfg = cfg
        self.params: Params = {}
        rng = np.random.default_rng(cfg.init_seed)
        p, d = self.params, cfg.d
        self.sfe = AASFE(cfg.frame_encoder, d, p, rng)
        for layer in range(cfg.num_encoder_layers):
            self._add_attention(f"enc{layer}.attn", rng)
            add_norm(p, f"enc{layer}.norm1", d)
            add_mlp(p, f"enc{layer}.ffn", [d, cfg.ffn, d], rng)
            add_norm(p, f"enc{layer}.norm2", d)
        new_param(p, "query", rng.standard_normal(d))
        for layer in range(cfg.num_decoder_layers):
            self._add_attention(f"dec{layer}.self", rng)
            add_norm(p, f"dec{layer}.norm1", d)
            self._add_attention(f"dec{layer}.cross", rng)
            add_norm(p, f"dec{layer}.norm2", d)
            add_mlp(p, f"dec{layer}.ffn", [d, cfg.ffn, d], rng)
            add_norm(p, f"dec{layer}.norm3", d)
        add_mlp(p, "fer", [d, d, d, cfg.num_classes], rng)
        nd = cfg.n * d
        add_mlp(p, "ssop", [nd, nd // 2, nd // 2, cfg.num_shuffle_types], rng)
        self.pe = positional_encoding(cfg.n, d)

    def _add_attention(self, prefix: str, rng: np.random.Generator) -> None:
        d = self.cfg.d
        add_linear(self.params, f"{prefix}.q", d, d, rng)
        add_linear(self.params, f"{prefix}.k", d, d, rng, bias=False)
        add_linear(self.params, f"{prefix}.v", d, d, rng)
        add_linear(self.params, f"{prefix}.o", d, d, rng)

    # -- parameters -------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise DimensionError(f"checkpoint mismatch: missing {sorted(missing)[:3]}, "
                                 f"unexpected {sorted(extra)[:3]}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise DimensionError(f"{k}: checkpoint shape {v.shape} vs model "
                                     f"{self.params[k].shape}")
            self.params[k].data[...] = v

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward pieces -----------------------------------------------------

    def snippet_features(self, frames) -> tuple[Tensor, Tensor]:
        return extract_snippet_features(frames, self.sfe)

    def encode(self, R: Tensor, positional: bool = True) -> Tensor:
        """``(B, n, d)`` snippet features to encoded features H of the same shape."""
        cfg, p = self.cfg, self.params
        if R.ndim != 3 or R.shape[-1] != cfg.d:
            raise DimensionError(f"encoder expects (B, n, {cfg.d}), got {R.shape}")
        x = R
        if positional:
            n = R.shape[1]
            pe = self.pe if n == cfg.n else positional_encoding(n, cfg.d)
            x = x + Tensor(pe)
        for layer in range(cfg.num_encoder_layers):
            att, _ = multi_head_attention(p, f"enc{layer}.attn", x, x, cfg.num_heads)
            x = apply_norm(p, f"enc{layer}.norm1", x + att)
            x = apply_norm(p, f"enc{layer}.norm2", x + apply_mlp(p, f"enc{layer}.ffn", x, 2))
        return x

    def decode(self, H: Tensor) -> tuple[Tensor, np.ndarray]:
        """Emotion representation ``(B, d)`` plus last-layer cross-attention ``(B, n)``."""
        cfg, p = self.cfg, self.params
        b = H.shape[0]
        y = T.reshape(p["query"], (1, 1, cfg.d)) + Tensor(np.zeros((b, 1, cfg.d)))
        weights = None
        for layer in range(cfg.num_decoder_layers):
            att, _ = multi_head_attention(p, f"dec{layer}.self", y, y, cfg.num_heads)
            y = apply_norm(p, f"dec{layer}.norm1", y + att)
            att, weights = multi_head_attention(p, f"dec{layer}.cross", y, H, cfg.num_heads)
            y = apply_norm(p, f"dec{layer}.norm2", y + att)
            y = apply_norm(p, f"dec{layer}.norm3", y + apply_mlp(p, f"dec{layer}.ffn", y, 2))
        if weights is None:
            cross = np.full((b, H.shape[1]), 1.0 / H.shape[1])
        else:
            cross = weights.data[:, :, 0, :].mean(axis=1)
        return T.reshape(y, (b, cfg.d)), cross

    def fer_head(self, T_: Tensor) -> Tensor:
        return T.softmax(apply_mlp(self.params, "fer", T_, 3), axis=-1)

    def order_features(self, R: Tensor, T_: Tensor) -> Tensor:
        """O_i = R_i + T for every snippet, concatenated to ``(B, n * d)``."""
        if R.shape[-1] != T_.shape[-1]:
            raise DimensionError(f"order features: R width {R.shape[-1]} vs T {T_.shape[-1]}")
        b, n, d = R.shape
        O = R + T.reshape(T_, (b, 1, d))
        return T.reshape(O, (b, n * d))

    def ssop_head(self, O: Tensor) -> Tensor:
        return T.softmax(apply_mlp(self.params, "ssop", O, 3), axis=-1)

    def forward(self, frames, with_ssop: bool = True) -> ESTOutput:
        """``frames``: ``(B, n, J, H, W, C)`` (or unbatched ``(n, J, H, W, C)``)."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 5:
            frames = frames[None]
        R, alpha = self.snippet_features(Tensor(frames))
        H = self.encode(R)
        T_, cross = self.decode(H)
        probs = self.fer_head(T_)
        order_probs = self.ssop_head(self.order_features(R, T_)) if with_ssop else None
        return ESTOutput(probs, order_probs, R, H, T_, cross, alpha)

    __call__ = forward


def profile(cfg: ModelConfig) -> dict[str, int]:
    """Analytic parameter and multiply-accumulate counts for one video.

    MACs cover affine maps (d_in * d_out per row), convolutions (k*k*C_in*C_out
    per output pixel) and the two attention products (QK^T and AV). The order
    head is reported separately because inference bypasses it.
    """
    d, n, J, f = cfg.d, cfg.n, cfg.J, cfg.ffn
    fe = cfg.frame_encoder

    def affine(a, b, bias=True):
        return a * b + (b if bias else 0)

    params = 0
    frame_macs = 0
    if fe.kind == "conv":
        c1, c2 = fe.conv_channels
        params += affine(9 * fe.channels, c1) + affine(9 * c1, c2)
        frame_macs += fe.height * fe.width * 9 * fe.channels * c1
        frame_macs += (fe.height // 2) * (fe.width // 2) * 9 * c1 * c2
    params += affine(fe.flat_width, d)
    frame_macs += fe.flat_width * d

    attn_params = 3 * affine(d, d) + affine(d, d, bias=False)
    sfe_params = 2 * affine(d, d) + affine(d, d, bias=False)
    params += sfe_params
    sfe_macs = 3 * J * d * d + 2 * J * J * d

    ffn_params = affine(d, f) + affine(f, d)
    enc_params = attn_params + ffn_params + 4 * d
    enc_macs = 4 * n * d * d + 2 * n * n * d + 2 * n * d * f
    dec_params = 2 * attn_params + ffn_params + 6 * d
    dec_macs = (4 * d * d + 2 * d) + (2 * d * d + 2 * n * d * d + 2 * n * d) + 2 * d * f
    params += cfg.num_encoder_layers * enc_params + d + cfg.num_decoder_layers * dec_params

    c = cfg.num_classes
    params += affine(d, d) + affine(d, d) + affine(d, c)
    fer_macs = 2 * d * d + d * c
    nd, half, s = n * d, n * d // 2, cfg.num_shuffle_types
    params += affine(nd, half) + affine(half, half) + affine(half, s)
    ssop_macs = nd * half + half * half + half * s

    macs = (n * J * frame_macs + n * sfe_macs + cfg.num_encoder_layers * enc_macs
            + cfg.num_decoder_layers * dec_macs + fer_macs)
    return {"parameter_count": int(params), "mac_count": int(macs),
            "ssop_head_macs": int(ssop_macs)}
