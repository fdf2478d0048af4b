import math

import numpy as np
import pytest

from lofarline.errors import ConfigError, NumericError
from lofarline.gradcheck import random_small_net
from lofarline.losses import (LossBreakdown, check_finite, detection_loss,
                              loss_param_gradient, multitask_loss,
                              recovery_loss, recovery_saliency_grad)
from lofarline.metrics import random_line_mask
from lofarline.network import network_forward, param_backward, zero_like_params
from lofarline.saliency import probability_map


def test_detection_loss_values():
    assert detection_loss((0.5, 0.5), 1) == pytest.approx(math.log(2.0), abs=1e-9)
    assert detection_loss((1.0, 0.0), 0) == 0.0
    assert detection_loss((0.9, 0.1), 0) == pytest.approx(-math.log(0.9), abs=1e-9)
    assert detection_loss((0.9, 0.1), 0) == pytest.approx(0.105361, abs=1e-6)


def test_detection_loss_clamps_zero_probability():
    assert detection_loss((1.0, 0.0), 1) == pytest.approx(-math.log(1e-12))


def test_detection_loss_label_validation():
    with pytest.raises(ConfigError):
        detection_loss((0.5, 0.5), 2)


def test_recovery_loss_uniform_2x2_case():
    """One line pixel in four, P = 0.5 everywhere: beta = 3/4 and the
    hand-summed loss is (0.75 + 0.25 * 3) * ln 2 = 1.5 ln 2."""
    prob = np.full((2, 2), 0.5)
    mask = np.array([[1, 0], [0, 0]])
    loss, beta = recovery_loss(prob, mask)
    assert beta == 0.75
    assert loss == pytest.approx(1.5 * math.log(2.0), abs=1e-9)
    assert loss == pytest.approx(1.039721, abs=1e-6)


def test_recovery_loss_perfect_prediction():
    mask = np.array([[1, 0], [0, 0]])
    prob = np.where(mask, 1.0, 0.0).astype(float)
    loss, _ = recovery_loss(prob, mask)
    assert 0.0 <= loss < 1e-9


def test_recovery_loss_needs_a_line_pixel():
    with pytest.raises(ConfigError):
        recovery_loss(np.full((2, 2), 0.5), np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        recovery_loss(np.full((2, 2), 0.5), np.ones((3, 3)))


def test_recovery_loss_permutation_equivariant():
    rng = np.random.default_rng(0)
    prob = rng.random((4, 4))
    mask = random_line_mask((4, 4), rng)
    a, _ = recovery_loss(prob, mask)
    b, _ = recovery_loss(prob[::-1, ::-1], mask[::-1, ::-1])
    assert a == pytest.approx(b, rel=1e-15)


def test_multitask_decomposition():
    p = (0.3, 0.7)
    prob = np.random.default_rng(1).random((3, 3))
    mask = random_line_mask((3, 3), np.random.default_rng(1))
    out = multitask_loss(p, 1, prob, mask)
    l_rec, beta = recovery_loss(prob, mask)
    assert out.total == detection_loss(p, 1) + l_rec   # exact decomposition
    assert out.beta == beta


def test_multitask_h0_path():
    out = multitask_loss((0.8, 0.2), 0, None, None)
    assert out == LossBreakdown(l_det=detection_loss((0.8, 0.2), 0), l_rec=0.0,
                                total=detection_loss((0.8, 0.2), 0), beta=0.0)
    with pytest.raises(ConfigError):
        multitask_loss((0.8, 0.2), 0, np.ones((2, 2)), None)
    with pytest.raises(ConfigError):
        multitask_loss((0.2, 0.8), 1, None, None)


def test_multitask_perfect_predictions():
    mask = np.array([[0, 1], [0, 0]])
    prob = np.where(mask, 1.0, 0.0).astype(float)
    assert multitask_loss((0.0, 1.0), 1, prob, mask).total < 1e-9


def test_saliency_grad_matches_loss_fd():
    rng = np.random.default_rng(2)
    raw = rng.standard_normal((4, 4))
    mask = random_line_mask((4, 4), rng)
    grad = recovery_saliency_grad(raw, mask)
    h = 1e-7
    for idx in [(0, 0), (1, 2), (3, 3)]:
        rp = raw.copy(); rp[idx] += h
        rm = raw.copy(); rm[idx] -= h
        fd = (recovery_loss(probability_map(rp), mask)[0]
              - recovery_loss(probability_map(rm), mask)[0]) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_loss_param_gradient_h0_equals_detection_backward():
    cfg, params, x = random_small_net(3)
    trace = network_forward(cfg, params, x)
    breakdown, grads = loss_param_gradient(cfg, params, x, h=0)
    dscores = np.array(trace.probs)
    dscores[0] -= 1.0
    det_grads = param_backward(cfg, params, trace, dscores)
    assert breakdown.l_rec == 0.0
    for g, d in zip(grads, det_grads):
        if g is not None:
            assert np.array_equal(g.weight, d.weight)
            assert np.array_equal(g.bias, d.bias)


def test_loss_param_gradient_h1_leaves_biases_detection_only():
    """The saliency back pass never touches biases, so the recovery term
    must not move any bias gradient."""
    cfg, params, x = random_small_net(4)
    mask = random_line_mask(x.shape, np.random.default_rng(4))
    _, joint = loss_param_gradient(cfg, params, x, h=1, line_mask=mask)
    trace = network_forward(cfg, params, x)
    dscores = np.array(trace.probs)
    dscores[1] -= 1.0
    det = param_backward(cfg, params, trace, dscores)
    for g, d in zip(joint, det):
        if g is not None:
            assert np.array_equal(g.bias, d.bias)


def test_loss_param_gradient_requires_mask_under_h1():
    cfg, params, x = random_small_net(5)
    with pytest.raises(ConfigError):
        loss_param_gradient(cfg, params, x, h=1)


def test_check_finite_raises_with_layer_name():
    cfg, params, x = random_small_net(6)
    grads = zero_like_params(params)
    with pytest.raises(NumericError):
        check_finite(grads, float("nan"))
    for g in grads:
        if g is not None:
            g.weight[...] = np.inf
            break
    with pytest.raises(NumericError, match="layer"):
        check_finite(grads, 1.0)
