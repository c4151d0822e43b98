"""Adam with bias correction over named parameter dictionaries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

Array = np.ndarray


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)

    @classmethod
    def init(cls, params: dict[str, Array]) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, Array],
    grads: dict[str, Array],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, Array], AdamState]:
    """One Adam update; returns fresh params and state, inputs untouched."""
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ShapeError("adam_step: params, grads and state must share keys")
    t = state.step + 1
    new_params: dict[str, Array] = {}
    new_m: dict[str, Array] = {}
    new_v: dict[str, Array] = {}
    # extreme gradients may overflow the moments to inf; the update then
    # degenerates to zero, and the next forward pass reports the blow-up
    with np.errstate(over="ignore", invalid="ignore"):
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ShapeError(
                    f"adam_step: gradient shape {g.shape} != param shape {p.shape} for {k!r}"
                )
            m = beta1 * state.m[k] + (1.0 - beta1) * g
            v = beta2 * state.v[k] + (1.0 - beta2) * g * g
            m_hat = m / (1.0 - beta1**t)
            v_hat = v / (1.0 - beta2**t)
            new_params[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
            new_m[k] = m
            new_v[k] = v
    return new_params, AdamState(step=t, m=new_m, v=new_v)
