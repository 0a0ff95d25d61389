"""Objective terms: hand values, invariances, gradient spot checks."""

import numpy as np
import pytest

from warship_sr import losses as L
from warship_sr.model import ModelConfig, PARAM_NAMES, build_model
from warship_sr.tensor_ops import ConfigurationError

TINY = ModelConfig(recurrences=3, embed_features=8, infer_features=4)


def test_final_loss_hand_value():
    # four pixels, unit error each: 4 / (2*4) = 0.5
    target = np.zeros((1, 1, 2, 2))
    final = np.ones((1, 1, 2, 2))
    assert L.final_loss(target, final) == pytest.approx(0.5)


def test_recurrence_loss_hand_value():
    # two recurrences with the same unit error: 8 / (2*2*4) = 0.5
    target = np.zeros((1, 1, 2, 2))
    inters = [np.ones((1, 1, 2, 2)), np.ones((1, 1, 2, 2))]
    assert L.recurrence_loss(target, inters) == pytest.approx(0.5)


def test_recurrence_equals_final_at_single_recurrence():
    rng = np.random.default_rng(0)
    target = rng.random((2, 1, 5, 5))
    out = rng.random((2, 1, 5, 5))
    assert L.recurrence_loss(target, [out]) == pytest.approx(L.final_loss(target, out))


def test_recurrence_loss_permutation_invariant():
    rng = np.random.default_rng(1)
    target = rng.random((1, 1, 4, 4))
    inters = [rng.random((1, 1, 4, 4)) for _ in range(4)]
    a = L.recurrence_loss(target, inters)
    b = L.recurrence_loss(target, inters[::-1])
    assert a == pytest.approx(b, rel=1e-12)


def test_decay_loss_hand_value():
    m = build_model(TINY, seed=0)
    for name in PARAM_NAMES:
        m.params[name].weights[:] = 0.0
    # non-exempt entry with sum of squares 25, beta 0.01 -> 0.25
    m.params["inet.recursive"].weights.flat[:25] = 1.0
    assert L.decay_loss(m, 0.01) == pytest.approx(0.25)


def test_decay_ignores_exempt_and_biases():
    m = build_model(TINY, seed=0)
    for name in PARAM_NAMES:
        m.params[name].weights[:] = 0.0
        if m.params[name].bias is not None:
            m.params[name].bias[:] = 0.0
    base = L.decay_loss(m, 1.0)
    assert base == 0.0
    m.params["enet.conv1"].weights[:] = 3.0
    m.params["rnet.expand"].weights[:] = -2.0
    m.params["enet.conv2"].bias[:] = 5.0
    assert L.decay_loss(m, 1.0) == 0.0
    grads = L.decay_grads(m, 1.0)
    assert np.all(grads["enet.conv1"] == 0.0)
    assert np.all(grads["rnet.expand"] == 0.0)


def test_decay_grads_value():
    m = build_model(TINY, seed=0)
    g = L.decay_grads(m, 1e-4)
    w = m.params["enet.conv2"].weights
    assert np.allclose(g["enet.conv2"], 2e-4 * w)


def test_composite_combination():
    rng = np.random.default_rng(2)
    m = build_model(TINY, seed=1)
    target = rng.random((1, 1, 6, 6))
    final = rng.random((1, 1, 6, 6))
    inters = [rng.random((1, 1, 6, 6)) for _ in range(3)]
    alpha, beta = 0.3, 1e-3
    bd = L.composite_loss(m, target, final, inters, alpha, beta)
    assert bd.total == pytest.approx(
        alpha * bd.recurrence + (1 - alpha) * bd.final + bd.decay, rel=1e-12
    )


@pytest.mark.parametrize("seed", range(5))
def test_supervised_gradients_finite_difference(seed):
    rng = np.random.default_rng(seed)
    target = rng.random((2, 1, 4, 4))
    final = rng.random((2, 1, 4, 4))
    inters = [rng.random((2, 1, 4, 4)) for _ in range(3)]
    alpha = 0.4
    gf, gis = L.composite_grads(target, final, inters, alpha)
    eps = 1e-6

    def supervised(f, ii):
        return alpha * L.recurrence_loss(target, ii) + (1 - alpha) * L.final_loss(target, f)

    idx = (1, 0, 2, 3)
    fp, fm = final.copy(), final.copy()
    fp[idx] += eps
    fm[idx] -= eps
    num = (supervised(fp, inters) - supervised(fm, inters)) / (2 * eps)
    assert num == pytest.approx(gf[idx], rel=1e-6, abs=1e-10)
    for r in range(3):
        ip = [a.copy() for a in inters]
        im = [a.copy() for a in inters]
        ip[r][idx] += eps
        im[r][idx] -= eps
        num = (supervised(final, ip) - supervised(final, im)) / (2 * eps)
        assert num == pytest.approx(gis[r][idx], rel=1e-6, abs=1e-10)


def test_alpha_schedule_constant():
    cfg = L.LossConfig(alpha=0.5)
    assert L.alpha_at_epoch(cfg, 0) == 0.5
    assert L.alpha_at_epoch(cfg, 10000) == 0.5


def test_alpha_schedule_linear_decay():
    cfg = L.LossConfig(alpha=0.8, alpha_schedule="linear_decay_to_zero", alpha_decay_epochs=10)
    assert L.alpha_at_epoch(cfg, 0) == pytest.approx(0.8)
    assert L.alpha_at_epoch(cfg, 5) == pytest.approx(0.4)
    assert L.alpha_at_epoch(cfg, 10) == 0.0
    assert L.alpha_at_epoch(cfg, 50) == 0.0


def test_loss_config_validation():
    with pytest.raises(ConfigurationError):
        L.LossConfig(alpha=1.5).validate()
    with pytest.raises(ConfigurationError):
        L.LossConfig(beta=-1e-4).validate()
    with pytest.raises(ConfigurationError):
        L.LossConfig(alpha_schedule="cosine").validate()
    L.LossConfig().validate()
