"""Optimizer state, global-norm gradient clipping, and grouped L2 decay.

The update rule is Adam (lr 1e-3, betas 0.9/0.999, eps 1e-8 by default).
L2 regularisation is applied as an explicit gradient addition per parameter
group *before* clipping, decoupled from the moment buffers, so the group
coefficients (recurrent 0.0001, convolutional 0.01) act exactly on the
raw weights.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .tensor import Tensor

DEFAULT_L2 = {"recurrent": 1e-4, "conv": 1e-2}


class OptimizerState:
    """Adam moments plus the training-regime knobs (clip norm, L2 groups)."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float = 10.0, l2: dict[str, float] | None = None):
        if clip_norm <= 0:
            raise ValueError("clip threshold must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.clip_norm = clip_norm
        self.l2 = dict(DEFAULT_L2 if l2 is None else l2)
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float = 10.0):
    """Scale all grads by max_norm/g when the global L2 norm g exceeds max_norm.

    Direction-preserving and idempotent; returns (scaled grads, global norm).
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    sq = 0.0
    for g in grads:
        sq += float(np.dot(g.ravel(), g.ravel()))
    norm = float(np.sqrt(sq))
    if not np.isfinite(norm):
        raise NumericError("non-finite gradient norm")
    # tiny slack keeps a second clip an exact no-op
    if norm <= max_norm * (1.0 + 1e-12):
        return list(grads), norm
    factor = max_norm / norm
    return [g * factor for g in grads], norm


def add_group_l2(params: dict[str, Tensor], groups: dict[str, str],
                 coeffs: dict[str, float]) -> None:
    """grad += coeff * param for every parameter whose group has a coefficient."""
    for name, p in params.items():
        coeff = coeffs.get(groups.get(name, ""), 0.0)
        if coeff == 0.0:
            continue
        reg = coeff * p.data
        p.grad = reg if p.grad is None else p.grad + reg


def apply_update(state: OptimizerState, params: dict[str, Tensor],
                 grads: dict[str, np.ndarray] | None = None) -> None:
    """One Adam step over all parameters. Expects grads already L2-adjusted and clipped."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter "
                             f"{name} with shape {p.data.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps))
        p.data = p.data - update.astype(p.data.dtype, copy=False)


def training_step(state: OptimizerState, params: dict[str, Tensor],
                  groups: dict[str, str]) -> float:
    """L2 -> global-norm clip -> Adam, in place. Returns the pre-clip global norm."""
    add_group_l2(params, groups, state.l2)
    names = list(params.keys())
    grads = [params[n].grad if params[n].grad is not None
             else np.zeros_like(params[n].data) for n in names]
    clipped, norm = clip_by_global_norm(grads, state.clip_norm)
    apply_update(state, params, dict(zip(names, clipped)))
    return norm
