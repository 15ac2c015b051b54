"""SGD and Adam with optional global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import MissingGradient
from .tensor import Tensor


@dataclass
class OptimizerState:
    algorithm: str = "adam"
    lr: float = 1e-3
    clip: float | None = 0.8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.algorithm not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")


def global_grad_norm(params: Mapping[str, Tensor]) -> float:
    total = 0.0
    for name, p in params.items():
        if p.grad is None:
            raise MissingGradient(f"parameter {name!r} has no gradient")
        total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def optimizer_step(params: Mapping[str, Tensor], state: OptimizerState) -> float:
    """Apply one in-place update from ``p.grad``; returns the pre-clip grad norm."""
    norm = global_grad_norm(params)
    scale = 1.0
    if state.clip is not None and norm > state.clip:
        scale = state.clip / norm
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad * scale
        if state.algorithm == "sgd":
            p.data = p.data - state.lr * g
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return norm


def zero_grad(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
