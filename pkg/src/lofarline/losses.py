"""Detection log loss, class-balanced recovery loss, their multi-task
combination, and the joint parameter gradient.

The recovery loss is evaluated on the sigmoid of the saliency map, so
its parameter gradient has to differentiate through an input gradient.
This is done under frozen-mask semantics: ReLU gates, dropout masks and
pooling routes are held at their forward values, which makes the
saliency map a multilinear function of the parameters whose derivative
is a second reverse accumulation over the back-pass graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericError
from .network import (ForwardTrace, NetworkConfig, Parameters, add_params,
                      iter_param_arrays, network_forward, param_backward)
from .saliency import back_pass, back_pass_param_adjoint, probability_map

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    l_det: float
    l_rec: float
    total: float
    beta: float


def detection_loss(p: tuple, h: int) -> float:
    """Log loss -log p_h for the true hypothesis, clamped at 1e-12."""
    if h not in (0, 1):
        raise ConfigError("hypothesis label must be 0 or 1")
    return -math.log(max(p[h], PROB_CLAMP))


def recovery_loss(prob_map: np.ndarray, line_mask: np.ndarray) -> tuple:
    """Class-balanced cross-entropy over line/background pixels.

    Positives are weighted by beta = |background| / |all pixels| and
    negatives by 1 - beta.  Returns (loss, beta).
    """
    prob_map = np.asarray(prob_map, dtype=float)
    mask = np.asarray(line_mask).astype(bool)
    if prob_map.shape != mask.shape:
        raise ConfigError("probability map and line map shapes differ")
    n_pos = int(mask.sum())
    if n_pos == 0:
        raise ConfigError("recovery loss needs at least one line pixel")
    beta = (mask.size - n_pos) / mask.size
    p = np.clip(prob_map, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -beta * float(np.log(p[mask]).sum()) - (1.0 - beta) * float(np.log1p(-p[~mask]).sum())
    return loss, beta


def multitask_loss(p: tuple, h: int, prob_map: Optional[np.ndarray],
                   line_mask: Optional[np.ndarray]) -> LossBreakdown:
    l_det = detection_loss(p, h)
    if h == 0:
        if prob_map is not None or line_mask is not None:
            raise ConfigError("recovery inputs must be absent under the null hypothesis")
        return LossBreakdown(l_det=l_det, l_rec=0.0, total=l_det, beta=0.0)
    if prob_map is None or line_mask is None:
        raise ConfigError("recovery inputs required when a line is present")
    l_rec, beta = recovery_loss(prob_map, line_mask)
    return LossBreakdown(l_det=l_det, l_rec=l_rec, total=l_det + l_rec, beta=beta)


def recovery_saliency_grad(raw: np.ndarray, line_mask: np.ndarray) -> np.ndarray:
    """d(recovery loss)/d(raw saliency); zero where the probability clamp
    is active so it stays consistent with the clamped loss."""
    mask = np.asarray(line_mask).astype(bool)
    n_pos = int(mask.sum())
    beta = (mask.size - n_pos) / mask.size
    p = probability_map(raw)
    grad = np.where(mask, beta * (p - 1.0), (1.0 - beta) * p)
    grad[(p <= PROB_CLAMP) | (p >= 1.0 - PROB_CLAMP)] = 0.0
    return grad


def loss_param_gradient(
    cfg: NetworkConfig,
    params: Parameters,
    lofargram: np.ndarray,
    h: int,
    line_mask: Optional[np.ndarray] = None,
    mode: str = "bp",
    trace: Optional[ForwardTrace] = None,
) -> tuple:
    """Multi-task loss and its exact parameter gradient for one sample.

    Returns (LossBreakdown, grads).  The recovery path contributes only
    when h = 1 and leaves all bias gradients untouched (the back pass
    never uses biases).
    """
    if trace is None:
        trace = network_forward(cfg, params, lofargram)
    p = trace.probs
    dscores = np.array(p)
    dscores[h] -= 1.0
    grads = param_backward(cfg, params, trace, dscores)
    l_det = detection_loss(p, h)
    if h == 0:
        breakdown = LossBreakdown(l_det=l_det, l_rec=0.0, total=l_det, beta=0.0)
    else:
        if line_mask is None:
            raise ConfigError("line map required when a line is present")
        signals, gates = back_pass(cfg, params, trace, mode)
        raw = signals[0][0]
        l_rec, beta = recovery_loss(probability_map(raw), line_mask)
        seed = recovery_saliency_grad(raw, line_mask)
        add_params(grads, back_pass_param_adjoint(cfg, params, trace, signals, gates, seed))
        breakdown = LossBreakdown(l_det=l_det, l_rec=l_rec, total=l_det + l_rec, beta=beta)
    check_finite(grads, breakdown.total)
    return breakdown, grads


def check_finite(grads: Parameters, loss: float) -> None:
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss!r}")
    for i, name, arr in iter_param_arrays(grads):
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite gradient in layer {i} ({name})")
