"""Adam with bias correction, operating on dicts of named arrays."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One Adam update.  Returns new parameter arrays; inputs are not modified.

    Parameters absent from ``grads`` are returned unchanged.
    """
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    out = {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            out[k] = p
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != np.shape(p):
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k!r} {np.shape(p)}")
        m = state.m.get(k)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        else:
            v = state.v[k]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[k] = m
        state.v[k] = v
        out[k] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return out
