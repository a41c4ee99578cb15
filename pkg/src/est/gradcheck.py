"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DeterminismError
from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    per_parameter: dict[str, float]
    max_rel_error: float
    h: float
    tol: float
    worst_parameter: str | None = None
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.max_rel_error <= self.tol)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "max_rel_error": self.max_rel_error,
            "worst_parameter": self.worst_parameter,
            "h": self.h,
            "tol": self.tol,
            "per_parameter": self.per_parameter,
        }


def relative_error(analytic, numeric) -> np.ndarray:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-12)


def gradcheck(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor],
              h: float = 1e-5, tol: float = 1e-6) -> GradCheckReport:
    """Compare backprop gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild its graph from the current contents of ``params``
    on every call and be bitwise deterministic.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    first = loss_fn()
    if loss_fn().data.tobytes() != first.data.tobytes():
        raise DeterminismError("loss_fn produced different values on identical parameters")

    for p in params.values():
        p.zero_grad()
    backward(first)
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params.items()}

    per_param: dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            numeric[i] = (up - down) / (2 * h)
        err = relative_error(analytic[name].reshape(-1), numeric)
        per_param[name] = float(err.max()) if err.size else 0.0

    worst = max(per_param, key=per_param.get) if per_param else None
    return GradCheckReport(per_param, per_param[worst] if worst else 0.0, h, tol, worst)
