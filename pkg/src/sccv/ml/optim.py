"""Adam optimizer over ModelParams trees.

Functional style: adam_step returns fresh parameters and a fresh state,
never mutating its inputs, so training runs are replayable and snapshots
of earlier epochs stay valid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, ModelParams


@dataclass
class AdamState:
    """First and second moment estimates per tensor, plus the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params: ModelParams) -> "AdamState":
        m = {name: np.zeros_like(arr) for name, arr in params.tensors()}
        v = {name: np.zeros_like(arr) for name, arr in params.tensors()}
        return cls(m=m, v=v, t=0)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              config: ModelConfig) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with m_hat and
    v_hat the bias-corrected moment estimates.  Epsilon sits outside the
    square root.
    """
    b1, b2, eps, lr = config.beta1, config.beta2, config.eps, config.lr
    t = state.t + 1
    grad_by_name = dict(grads.tensors())
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    updated: dict[str, np.ndarray] = {}
    for name, theta in params.tensors():
        g = grad_by_name[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        updated[name] = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return params.with_tensors(updated), AdamState(m=new_m, v=new_v, t=t)
