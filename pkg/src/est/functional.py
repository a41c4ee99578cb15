"""Differentiable building blocks shared by the snippet extractor and the transformer."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError, ValidationError
from .tensor import Tensor

COSINE_EPS = 1e-8
CLAMP_EPS = 1e-7


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with the bias added to every row."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input width {x.shape[-1]} vs weight {weight.shape}")
    out = T.matmul(x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise DimensionError(f"linear: bias {bias.shape} vs weight {weight.shape}")
        out = out + bias
    return out


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(d)) v over the last two axes.

    Returns ``(output, weights)``; ``weights`` has shape ``(..., a, b)``.
    """
    d = q.shape[-1]
    if k.shape[-1] != d or v.shape[-1] != d:
        raise DimensionError(f"attention widths disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention key/value rows disagree: k {k.shape}, v {v.shape}")
    scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(d))
    weights = T.softmax(scores, axis=-1)
    return T.matmul(weights, v), weights


def cosine_similarity(u: Tensor, v: Tensor, eps: float = COSINE_EPS) -> Tensor:
    """Cosine similarity over the last axis with norms floored at ``eps``."""
    u, v = T.as_tensor(u), T.as_tensor(v)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionError(f"cosine: widths {u.shape[-1]} and {v.shape[-1]} differ")
    dot = T.tsum(u * v, axis=-1)
    return dot / (T.clamped_norm(u, eps) * T.clamped_norm(v, eps))


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels))
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValidationError(f"labels {labels.tolist()} out of range for {num_classes} classes")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def bce_sum_loss(pred: Tensor, target, clamp_eps: float = CLAMP_EPS) -> Tensor:
    """-sum(Y log P + (1 - Y) log(1 - P)) summed over classes and any batch axes.

    ``target`` must be one-hot along the last axis.
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ValidationError(f"target shape {target.shape} != prediction shape {pred.shape}")
    if not (np.all((target == 0) | (target == 1)) and np.all(target.sum(axis=-1) == 1)):
        raise ValidationError("target is not one-hot")
    p = T.clip(pred, clamp_eps, 1.0 - clamp_eps)
    terms = target * T.log(p) + (1.0 - target) * T.log(1.0 - p)
    return -T.tsum(terms)
