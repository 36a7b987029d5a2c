"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads)))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Scale all gradients by max_norm/norm when the global L2 norm exceeds it.

    Returns the (possibly scaled) gradients and the pre-clip norm.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads, norm
    factor = np.float32(max_norm / norm)
    return [g * factor for g in grads], norm


@dataclass
class AdamWState:
    """Per-parameter moments and step counter for the decoupled-decay update."""

    learning_rate: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params: list[np.ndarray], learning_rate: float,
             weight_decay: float = 0.0) -> "AdamWState":
        return cls(
            learning_rate=learning_rate,
            weight_decay=weight_decay,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adamw_step(state: AdamWState, params: list[np.ndarray],
               grads: list[np.ndarray], lr_scale: float = 1.0) -> list[np.ndarray]:
    """One AdamW update; returns new parameter arrays and mutates ``state``.

    Weight decay is decoupled: each parameter first shrinks by lr*c*param,
    then the bias-corrected moment step is applied.
    """
    assert len(params) == len(grads) == len(state.m)
    state.step += 1
    lr = state.learning_rate * lr_scale
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        new_p = p - lr * state.weight_decay * p
        new_p = new_p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        out.append(new_p.astype(p.dtype, copy=False))
    return out


def decayed_lr_scale(step: int, total_steps: int, decay_rate: float = 0.1,
                     boundary_fraction: float = 0.8) -> float:
    """Single multiplicative learning-rate drop at a fraction of total steps."""
    if total_steps <= 0:
        return 1.0
    return decay_rate if step >= boundary_fraction * total_steps else 1.0
