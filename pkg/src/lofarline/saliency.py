"""Input-gradient saliency: the derivative of the line-present score
with respect to the (scaled) input image, under three back-pass modes.

Modes differ only at ReLU layers:
  bp     - gate by forward-input positivity (the true sub-gradient)
  deconv - gate by positivity of the arriving backward signal
  guided - gate by both

The back pass also exposes its intermediate signals and gates, which the
loss module reuses to differentiate the saliency map with respect to the
parameters under frozen-mask semantics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError
from .network import (Conv, Dropout, Flatten, ForwardTrace, FullyConnected,
                      MaxPool, NetworkConfig, Parameters, ReLU,
                      zero_like_params)

MODES = ("bp", "deconv", "guided")


@dataclass(frozen=True)
class SaliencyResult:
    raw: np.ndarray          # signed input gradient, (T, K)
    prob: np.ndarray         # sigmoid(raw)
    display: np.ndarray      # min-max of |raw| in [0, 1]
    mode: str


def back_pass(cfg: NetworkConfig, params: Parameters, trace: ForwardTrace, mode: str):
    """Run the score->input back pass.

    Returns (signals, gates): signals[i] is the backward signal at the
    input of layer i (so signals[0] is the raw saliency map and
    signals[L] is the score-level seed (0, 1)); gates maps each
    ReLU/Dropout layer index to its effective multiplicative gate.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown saliency mode {mode!r}")
    n = len(cfg.layers)
    signals = [None] * (n + 1)
    gates = {}
    g = np.array([0.0, 1.0])
    signals[n] = g
    for i in range(n - 1, -1, -1):
        layer = cfg.layers[i]
        x = trace.inputs[i]
        if isinstance(layer, Conv):
            g = kernels.conv_input_grad(np.ascontiguousarray(g), params[i].weight,
                                        layer.stride, layer.pad, x.shape[1], x.shape[2])
        elif isinstance(layer, ReLU):
            if mode == "bp":
                gate = trace.relu_masks[i].astype(float)
            elif mode == "deconv":
                gate = (g > 0).astype(float)
            else:
                gate = trace.relu_masks[i] & (g > 0)
                gate = gate.astype(float)
            gates[i] = gate
            g = g * gate
        elif isinstance(layer, MaxPool):
            g = kernels.pool_scatter(g, trace.pool_indices[i], x.shape[1], x.shape[2])
        elif isinstance(layer, Flatten):
            g = g.reshape(x.shape)
        elif isinstance(layer, FullyConnected):
            g = params[i].weight @ g
        elif isinstance(layer, Dropout):
            gates[i] = trace.dropout_masks[i]
            g = g * trace.dropout_masks[i]
        signals[i] = g
    return signals, gates


def input_gradient(cfg: NetworkConfig, params: Parameters, trace: ForwardTrace,
                   mode: str = "bp") -> np.ndarray:
    """Raw (T, K) saliency map for the line-present score."""
    signals, _ = back_pass(cfg, params, trace, mode)
    raw = signals[0]
    if raw.ndim == 3:
        if raw.shape[0] != 1:
            raise ConfigError("saliency expects a single-channel input")
        raw = raw[0]
    return raw


def probability_map(raw: np.ndarray) -> np.ndarray:
    out = np.empty_like(raw, dtype=float)
    pos = raw >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-raw[pos]))
    e = np.exp(raw[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def normalize_for_display(raw: np.ndarray) -> np.ndarray:
    mag = np.abs(raw)
    lo, hi = mag.min(), mag.max()
    if hi == lo:
        return np.zeros_like(mag)
    return (mag - lo) / (hi - lo)


def compute_saliency(cfg: NetworkConfig, params: Parameters, trace: ForwardTrace,
                     mode: str = "bp") -> SaliencyResult:
    raw = input_gradient(cfg, params, trace, mode)
    return SaliencyResult(raw=raw, prob=probability_map(raw),
                          display=normalize_for_display(raw), mode=mode)


def back_pass_param_adjoint(cfg: NetworkConfig, params: Parameters, trace: ForwardTrace,
                            signals: list, gates: dict, seed_grad: np.ndarray) -> Parameters:
    """Parameter gradient of <seed_grad, saliency map> with the recorded
    gates and pooling routes held frozen.

    With frozen masks the back pass is a chain of maps that are linear in
    the signal and linear in the one parameter they use, so its adjoint is
    a bias-free forward pass through the same frozen network; parameter
    contributions pair the adjoint signal at a layer's input with the
    recorded back-pass signal at its output.
    """
    grads = zero_like_params(params)
    u = np.asarray(seed_grad, dtype=float)
    if u.ndim == 2:
        u = u[None, :, :]
    for i, layer in enumerate(cfg.layers):
        g_out = signals[i + 1]
        x = trace.inputs[i]
        if isinstance(layer, Conv):
            u = np.ascontiguousarray(u)
            grads[i].weight += kernels.conv_weight_grad(u, np.ascontiguousarray(g_out),
                                                        layer.stride, layer.pad,
                                                        layer.kernel_h, layer.kernel_w)
            u = kernels.conv_forward(u, params[i].weight, None, layer.stride, layer.pad)
        elif isinstance(layer, (ReLU, Dropout)):
            u = u * gates[i]
        elif isinstance(layer, MaxPool):
            u = kernels.pool_gather(u, trace.pool_indices[i])
        elif isinstance(layer, Flatten):
            u = u.reshape(-1)
        elif isinstance(layer, FullyConnected):
            grads[i].weight += np.outer(u, g_out)
            u = params[i].weight.T @ u
    return grads
