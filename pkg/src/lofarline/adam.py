"""Adam optimizer with bias correction and an L2 weight penalty added
to the gradient before the moment updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import LayerParams, Parameters, zero_like_params

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: Parameters
    v: Parameters
    t: int = 0

    @classmethod
    def init(cls, params: Parameters) -> "AdamState":
        return cls(m=zero_like_params(params), v=zero_like_params(params), t=0)


def adam_step(params: Parameters, grads: Parameters, state: AdamState,
              lr: float, weight_decay: float = 0.0) -> None:
    """One in-place update over all trainable arrays."""
    state.t += 1
    bc1 = 1.0 - BETA1 ** state.t
    bc2 = 1.0 - BETA2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p is None:
            continue
        for name in ("weight", "bias"):
            w = getattr(p, name)
            gr = getattr(g, name)
            if weight_decay:
                gr = gr + weight_decay * w
            mm = getattr(m, name)
            vv = getattr(v, name)
            mm *= BETA1
            mm += (1.0 - BETA1) * gr
            vv *= BETA2
            vv += (1.0 - BETA2) * gr * gr
            w -= lr * (mm / bc1) / (np.sqrt(vv / bc2) + EPS)
