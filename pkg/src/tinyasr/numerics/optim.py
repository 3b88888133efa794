"""Adadelta updates with global-norm gradient clipping.

Gradient maps are plain dicts (any hashable key -> numpy array). The
optimizer touches only the entries present in the gradient map; parameters
without a gradient this step keep both their value and their running
averages untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


@dataclass
class AdadeltaState:
    """Per-parameter running averages of squared gradients and updates."""

    rho: float = 0.95
    epsilon: float = 1e-8
    sq_grad: dict = field(default_factory=dict)
    sq_delta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ContractError(f"adadelta rho must lie in (0, 1), got {self.rho}")
        if self.epsilon <= 0.0:
            raise ContractError(f"adadelta epsilon must be positive, got {self.epsilon}")

    @classmethod
    def for_params(cls, params: dict, rho: float = 0.95, epsilon: float = 1e-8) -> "AdadeltaState":
        state = cls(rho=rho, epsilon=epsilon)
        for name, p in params.items():
            state.sq_grad[name] = np.zeros_like(p.data)
            state.sq_delta[name] = np.zeros_like(p.data)
        return state


def global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        flat = np.asarray(g).ravel()
        total += float(flat @ flat)
    return math.sqrt(total)


def clip_global_norm(grads: dict, max_norm: float) -> dict:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / norm
        for key in grads:
            grads[key] = grads[key] * factor
    return grads


def adadelta_step(params: dict, grads: dict, state: AdadeltaState) -> None:
    """Apply one Adadelta update in place.

    params maps name -> Tensor, grads maps name -> array. Update order per
    parameter: decay the squared-gradient average, form the step from the
    ratio of running averages, decay the squared-update average, subtract.
    """
    rho, eps = state.rho, state.epsilon
    for name, g in grads.items():
        p = params.get(name)
        if p is None:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        if not isinstance(p, Tensor) or p.data.shape != g.shape:
            raise ContractError(f"parameter {name!r} has shape {p.data.shape}, gradient {g.shape}")
        eg = state.sq_grad.get(name)
        ed = state.sq_delta.get(name)
        if eg is None or eg.shape != g.shape:
            raise ContractError(f"optimizer state for {name!r} does not match parameter shape")
        eg = rho * eg + (1.0 - rho) * (g * g)
        delta = np.sqrt((ed + eps) / (eg + eps)) * g
        ed = rho * ed + (1.0 - rho) * (delta * delta)
        state.sq_grad[name] = eg
        state.sq_delta[name] = ed
        p.data = p.data - delta
