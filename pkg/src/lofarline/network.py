"""Small convolutional network: layer descriptors, forward pass with a
full trace, exact reverse-mode parameter gradients, and named presets.

Everything operates on single samples, channels-first, float64.  The
network input is the lofargram standardized per image (zero mean, unit
variance) and scaled by 1/255; plain 1/255 scaling leaves the input with
a large DC offset and image-to-image contrast drift that the small desk
networks fail to train through.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels
from .errors import ConfigError

PIXEL_SCALE = 255.0


# ---------------------------------------------------------------------------
# layer descriptors


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    pad: int = 0


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    size: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class FullyConnected:
    out_dim: int


@dataclass(frozen=True)
class Dropout:
    rate: float


Layer = Union[Conv, ReLU, MaxPool, Flatten, FullyConnected, Dropout]


@dataclass(frozen=True)
class NetworkConfig:
    layers: tuple
    input_shape: tuple       # (C, H, W)

    def __post_init__(self):
        shapes = shape_chain(self)
        if shapes[-1] != (2,):
            raise ConfigError(f"head must emit exactly 2 scores, got {shapes[-1]}")


def shape_chain(cfg: NetworkConfig) -> list:
    """Output shape after each layer; raises ConfigError on a broken chain."""
    shape = tuple(cfg.input_shape)
    shapes = [shape]
    for layer in cfg.layers:
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise ConfigError("Conv needs a (C,H,W) input")
            c, h, w = shape
            oh = (h + 2 * layer.pad - layer.kernel_h) // layer.stride + 1
            ow = (w + 2 * layer.pad - layer.kernel_w) // layer.stride + 1
            if oh < 1 or ow < 1:
                raise ConfigError("Conv output collapsed to zero size")
            shape = (layer.out_channels, oh, ow)
        elif isinstance(layer, MaxPool):
            if len(shape) != 3:
                raise ConfigError("MaxPool needs a (C,H,W) input")
            c, h, w = shape
            if layer.size > h or layer.size > w:
                raise ConfigError("pooling window larger than input")
            shape = (c, (h - layer.size) // layer.stride + 1, (w - layer.size) // layer.stride + 1)
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, FullyConnected):
            if len(shape) != 1:
                raise ConfigError("FullyConnected needs a flat input")
            shape = (layer.out_dim,)
        elif isinstance(layer, (ReLU, Dropout)):
            pass
        else:
            raise ConfigError(f"unknown layer {layer!r}")
        shapes.append(shape)
    return shapes


# ---------------------------------------------------------------------------
# parameters


@dataclass
class LayerParams:
    weight: np.ndarray
    bias: np.ndarray


Parameters = list  # Optional[LayerParams] per layer, aligned with cfg.layers


def init_parameters(cfg: NetworkConfig, seed: int) -> Parameters:
    """He-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng([int(seed), 7])
    shapes = shape_chain(cfg)
    params: Parameters = []
    for i, layer in enumerate(cfg.layers):
        if isinstance(layer, Conv):
            cin = shapes[i][0]
            fan_in = cin * layer.kernel_h * layer.kernel_w
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, (layer.out_channels, cin, layer.kernel_h, layer.kernel_w))
            params.append(LayerParams(weight=w, bias=np.zeros(layer.out_channels)))
        elif isinstance(layer, FullyConnected):
            fan_in = shapes[i][0]
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, (fan_in, layer.out_dim))
            params.append(LayerParams(weight=w, bias=np.zeros(layer.out_dim)))
        else:
            params.append(None)
    return params


def iter_param_arrays(params: Parameters):
    """Yield (layer_index, field_name, array) over all trainable arrays in fixed order."""
    for i, p in enumerate(params):
        if p is None:
            continue
        yield i, "weight", p.weight
        yield i, "bias", p.bias


def zero_like_params(params: Parameters) -> Parameters:
    return [None if p is None else LayerParams(np.zeros_like(p.weight), np.zeros_like(p.bias))
            for p in params]


def add_params(acc: Parameters, other: Parameters) -> None:
    for a, o in zip(acc, other):
        if a is not None:
            a.weight += o.weight
            a.bias += o.bias


def copy_params(params: Parameters) -> Parameters:
    return [None if p is None else LayerParams(p.weight.copy(), p.bias.copy()) for p in params]


# ---------------------------------------------------------------------------
# forward


@dataclass
class ForwardTrace:
    inputs: list             # inputs[i] = activation fed into layer i; inputs[-1] = scores
    relu_masks: dict         # layer index -> boolean mask 1(x > 0)
    pool_indices: dict       # layer index -> int64 argmax plane indices
    dropout_masks: dict      # layer index -> scaled keep mask (ones in eval mode)
    scores: np.ndarray = field(default=None)
    probs: tuple = field(default=None)


def softmax_probs(scores) -> tuple:
    s = np.asarray(scores, dtype=float)
    m = s.max()
    e = np.exp(s - m)
    z = e.sum()
    return (float(e[0] / z), float(e[1] / z))


def standardize_input(pixels: np.ndarray) -> np.ndarray:
    """Per-image standardization followed by the 1/255 scale; this is the
    map from lofargram pixels to the network input."""
    p = np.asarray(pixels, dtype=float)
    std = p.std()
    if std == 0:
        std = 1.0
    return (p - p.mean()) / (std * PIXEL_SCALE)


def network_forward(
    cfg: NetworkConfig,
    params: Parameters,
    lofargram: np.ndarray,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
    standardize: bool = True,
) -> ForwardTrace:
    """Forward pass recording a full trace.

    With standardize=False the array is taken to be a ready network input
    (used by finite-difference checks that perturb the input directly).
    """
    x = standardize_input(lofargram) if standardize else np.asarray(lofargram, dtype=float)
    if x.ndim == 2:
        x = x[None, :, :]
    if x.shape != tuple(cfg.input_shape):
        raise ConfigError(f"input shape {x.shape} != configured {cfg.input_shape}")
    trace = ForwardTrace(inputs=[], relu_masks={}, pool_indices={}, dropout_masks={})
    for i, layer in enumerate(cfg.layers):
        trace.inputs.append(x)
        p = params[i]
        if isinstance(layer, Conv):
            x = kernels.conv_forward(x, p.weight, p.bias, layer.stride, layer.pad)
        elif isinstance(layer, ReLU):
            mask = x > 0
            trace.relu_masks[i] = mask
            x = np.where(mask, x, 0.0)
        elif isinstance(layer, MaxPool):
            x, idx = kernels.maxpool_forward(x, layer.size, layer.stride)
            trace.pool_indices[i] = idx
        elif isinstance(layer, Flatten):
            x = x.reshape(-1)
        elif isinstance(layer, FullyConnected):
            x = p.weight.T @ x + p.bias
        elif isinstance(layer, Dropout):
            if train_mode:
                if rng is None:
                    raise ConfigError("train-mode forward with dropout needs an rng")
                keep = rng.random(x.shape) >= layer.rate
                mask = keep / (1.0 - layer.rate)
            else:
                mask = np.ones_like(x)
            trace.dropout_masks[i] = mask
            x = x * mask
    trace.inputs.append(x)
    trace.scores = x
    trace.probs = softmax_probs(x)
    return trace


# ---------------------------------------------------------------------------
# backward


def param_backward(
    cfg: NetworkConfig,
    params: Parameters,
    trace: ForwardTrace,
    dscores: np.ndarray,
    want_input_grad: bool = False,
):
    """Reverse-mode gradients of a scalar loss with d(loss)/d(scores) = dscores.

    Returns grads (Parameters-shaped); with want_input_grad also the
    gradient with respect to the scaled network input.
    """
    grads = zero_like_params(params)
    g = np.asarray(dscores, dtype=float)
    for i in range(len(cfg.layers) - 1, -1, -1):
        layer = cfg.layers[i]
        x = trace.inputs[i]
        p = params[i]
        if isinstance(layer, Conv):
            grads[i].bias += g.sum(axis=(1, 2))
            grads[i].weight += kernels.conv_weight_grad(x, np.ascontiguousarray(g), layer.stride,
                                                        layer.pad, layer.kernel_h, layer.kernel_w)
            g = kernels.conv_input_grad(np.ascontiguousarray(g), p.weight, layer.stride,
                                        layer.pad, x.shape[1], x.shape[2])
        elif isinstance(layer, ReLU):
            g = g * trace.relu_masks[i]
        elif isinstance(layer, MaxPool):
            g = kernels.pool_scatter(g, trace.pool_indices[i], x.shape[1], x.shape[2])
        elif isinstance(layer, Flatten):
            g = g.reshape(x.shape)
        elif isinstance(layer, FullyConnected):
            grads[i].bias += g
            grads[i].weight += np.outer(x, g)
            g = p.weight @ g
        elif isinstance(layer, Dropout):
            g = g * trace.dropout_masks[i]
    if want_input_grad:
        return grads, g
    return grads


# ---------------------------------------------------------------------------
# presets


def preset(name: str, input_hw: Optional[tuple] = None) -> NetworkConfig:
    """Named architectures; "alex-mini" and "vgg-mini" are 64x64 desk
    configurations, "alex-paper" is the full-size 224x224 stack (5 conv +
    3 FC, single channel) that is constructible but not exercised in CI.
    """
    if name == "alex-mini":
        hw = input_hw or (64, 64)
        layers = (
            Conv(8, 5, 5, stride=2, pad=2), ReLU(), MaxPool(2, 2),
            Conv(16, 3, 3, stride=1, pad=1), ReLU(), MaxPool(2, 2),
            Flatten(),
            FullyConnected(64), ReLU(), Dropout(0.5),
            FullyConnected(2),
        )
    elif name == "vgg-mini":
        hw = input_hw or (64, 64)
        layers = (
            Conv(8, 3, 3, pad=1), ReLU(),
            Conv(8, 3, 3, pad=1), ReLU(), MaxPool(2, 2),
            Conv(16, 3, 3, pad=1), ReLU(), MaxPool(2, 2),
            Conv(16, 3, 3, pad=1), ReLU(), MaxPool(2, 2),
            Flatten(),
            FullyConnected(64), ReLU(), Dropout(0.5),
            FullyConnected(2),
        )
    elif name == "alex-paper":
        hw = input_hw or (224, 224)
        layers = (
            Conv(96, 11, 11, stride=4, pad=2), ReLU(), MaxPool(3, 2),
            Conv(256, 5, 5, pad=2), ReLU(), MaxPool(3, 2),
            Conv(384, 3, 3, pad=1), ReLU(),
            Conv(384, 3, 3, pad=1), ReLU(),
            Conv(256, 3, 3, pad=1), ReLU(), MaxPool(3, 2),
            Flatten(),
            FullyConnected(4096), ReLU(), Dropout(0.5),
            FullyConnected(4096), ReLU(), Dropout(0.5),
            FullyConnected(2),
        )
    else:
        raise ConfigError(f"unknown network preset {name!r}")
    return NetworkConfig(layers=layers, input_shape=(1,) + tuple(hw))
