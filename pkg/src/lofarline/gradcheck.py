"""Central finite-difference verification of analytic gradients.

Used both as a test oracle and through the `gradcheck` CLI subcommand.
Coordinates whose +/- step perturbations flip a ReLU mask or a pooling
route are reported separately and excluded from the error maximum (the
analytic gradient is a one-sided sub-gradient exactly at those kinks).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericError
from .network import (ForwardTrace, NetworkConfig, Parameters, copy_params,
                      iter_param_arrays, network_forward)

# Relative-error denominator floor; below this gradient scale the check
# degenerates to an absolute comparison.
DENOM_FLOOR = 1e-2


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    n_skipped_kinks: int
    tol: float
    per_layer_max: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def _masks_signature(trace: ForwardTrace):
    return (
        tuple((i, m.tobytes()) for i, m in sorted(trace.relu_masks.items())),
        tuple((i, m.tobytes()) for i, m in sorted(trace.pool_indices.items())),
    )


def finite_difference_check(
    cfg: NetworkConfig,
    params: Parameters,
    x: np.ndarray,
    loss_and_grad: Callable,
    loss_fn: Callable,
    step: float = 1e-5,
    tol: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic parameter gradients against central differences.

    loss_and_grad(cfg, params, x) -> (scalar_loss, grads) is evaluated
    once at the base point; loss_fn(cfg, params, x) -> (scalar_loss,
    ForwardTrace) is evaluated at every perturbed point.
    """
    loss0, grads = loss_and_grad(cfg, params, x)
    if not np.isfinite(loss0):
        raise NumericError("non-finite loss in gradient check")
    analytic_by_key = dict(((j, n), a) for j, n, a in iter_param_arrays(grads))
    work = copy_params(params)
    max_err = 0.0
    n_checked = 0
    n_skipped = 0
    per_layer: dict = {}
    for i, name, arr in iter_param_arrays(work):
        aflat = analytic_by_key[(i, name)].reshape(-1)
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            lp, trace_p = loss_fn(cfg, work, x)
            flat[k] = orig - step
            lm, trace_m = loss_fn(cfg, work, x)
            flat[k] = orig
            if _masks_signature(trace_p) != _masks_signature(trace_m):
                n_skipped += 1
                continue
            numeric = (lp - lm) / (2.0 * step)
            err = abs(aflat[k] - numeric) / max(abs(aflat[k]), abs(numeric), DENOM_FLOOR)
            per_layer[(i, name)] = max(per_layer.get((i, name), 0.0), err)
            max_err = max(max_err, err)
            n_checked += 1
    return GradCheckReport(max_rel_error=max_err, n_checked=n_checked,
                           n_skipped_kinks=n_skipped, tol=tol, per_layer_max=per_layer)


def input_gradient_fd(
    cfg: NetworkConfig,
    params: Parameters,
    x: np.ndarray,
    score_index: int = 1,
    step: float = 1e-5,
) -> np.ndarray:
    """Central finite differences of a score with respect to each network
    input coordinate (the standardized, scaled image the saliency map is
    taken against); x is given in lofargram pixel units.

    Coordinates whose +/- step lands on opposite sides of a ReLU kink or
    flips a pooling route are returned as NaN: the analytic value there is
    a one-sided sub-gradient and central differences do not apply.
    """
    from .network import standardize_input

    x0 = standardize_input(x)
    fd = np.zeros_like(x0)
    work = x0.copy()
    it = np.nditer(x0, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = work[idx]
        work[idx] = orig + step
        trace_p = network_forward(cfg, params, work, standardize=False)
        work[idx] = orig - step
        trace_m = network_forward(cfg, params, work, standardize=False)
        work[idx] = orig
        if _masks_signature(trace_p) != _masks_signature(trace_m):
            fd[idx] = np.nan
            continue
        fd[idx] = (trace_p.scores[score_index] - trace_m.scores[score_index]) / (2.0 * step)
    return fd


def detection_loss_and_grad(cfg, params, x, h: int = 0):
    """Adapters for the two standard checks; importable by tests and the CLI."""
    from .losses import loss_param_gradient

    breakdown, grads = loss_param_gradient(cfg, params, x, h=h, line_mask=None)
    return breakdown.total, grads


def detection_loss_fn(cfg, params, x, h: int = 0):
    from .losses import detection_loss

    trace = network_forward(cfg, params, x)
    return detection_loss(trace.probs, h), trace


def joint_loss_and_grad(cfg, params, x, line_mask):
    from .losses import loss_param_gradient

    breakdown, grads = loss_param_gradient(cfg, params, x, h=1, line_mask=line_mask)
    return breakdown.total, grads


def joint_loss_fn(cfg, params, x, line_mask):
    from .losses import detection_loss, recovery_loss
    from .saliency import input_gradient, probability_map

    trace = network_forward(cfg, params, x)
    raw = input_gradient(cfg, params, trace, "bp")
    l_rec, _ = recovery_loss(probability_map(raw), line_mask)
    return detection_loss(trace.probs, 1) + l_rec, trace


def random_small_net(seed: int, n_conv: int = None, with_relu: bool = True,
                     with_pool: bool = True, input_hw: tuple = (8, 8)):
    """Random tiny network + parameters + input for oracle tests.

    Returns (cfg, params, x) with x in lofargram units [0, 255].
    """
    from .network import (Conv, Flatten, FullyConnected, MaxPool,
                          NetworkConfig, ReLU, init_parameters)

    rng = np.random.default_rng(seed)
    if n_conv is None:
        n_conv = int(rng.integers(1, 4))
    h, w = input_hw
    layers = []
    channels = 1
    for _ in range(n_conv):
        out_ch = int(rng.integers(2, 4))
        layers.append(Conv(out_ch, 3, 3, stride=1, pad=1))
        channels = out_ch
        if with_relu:
            layers.append(ReLU())
        if with_pool and min(h, w) >= 4 and rng.random() < 0.5:
            layers.append(MaxPool(2, 2))
            h //= 2
            w //= 2
    layers.append(Flatten())
    layers.append(FullyConnected(int(rng.integers(4, 9))))
    if with_relu:
        layers.append(ReLU())
    layers.append(FullyConnected(2))
    cfg = NetworkConfig(layers=tuple(layers), input_shape=(1,) + tuple(input_hw))
    params = init_parameters(cfg, seed)
    x = rng.uniform(0.0, 255.0, input_hw)
    return cfg, params, x
