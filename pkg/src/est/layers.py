"""Parameter registration and the affine/normalization layers built on it."""
from __future__ import annotations

from typing import Dict

import numpy as np

from . import functional as F
from . import tensor as T
from .tensor import Tensor

Params = Dict[str, Tensor]

LN_EPS = 1e-5


def new_param(params: Params, name: str, data: np.ndarray) -> Tensor:
    if name in params:
        raise KeyError(f"parameter {name!r} registered twice")
    params[name] = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, name=name)
    return params[name]


def add_linear(params: Params, name: str, d_in: int, d_out: int,
               rng: np.random.Generator, bias: bool = True) -> None:
    limit = np.sqrt(6.0 / (d_in + d_out))
    new_param(params, f"{name}.weight", rng.uniform(-limit, limit, (d_in, d_out)))
    if bias:
        new_param(params, f"{name}.bias", np.zeros(d_out))


def apply_linear(params: Params, name: str, x: Tensor) -> Tensor:
    return F.linear(x, params[f"{name}.weight"], params.get(f"{name}.bias"))


def add_norm(params: Params, name: str, d: int) -> None:
    new_param(params, f"{name}.gamma", np.ones(d))
    new_param(params, f"{name}.beta", np.zeros(d))


def apply_norm(params: Params, name: str, x: Tensor) -> Tensor:
    return T.layer_norm(x, params[f"{name}.gamma"], params[f"{name}.beta"], LN_EPS)


def add_mlp(params: Params, name: str, widths: list[int], rng: np.random.Generator) -> None:
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        add_linear(params, f"{name}.fc{i + 1}", a, b, rng)


def apply_mlp(params: Params, name: str, x: Tensor, depth: int) -> Tensor:
    """Affine layers with ReLU between them (none after the last)."""
    for i in range(depth):
        x = apply_linear(params, f"{name}.fc{i + 1}", x)
        if i < depth - 1:
            x = T.relu(x)
    return x
