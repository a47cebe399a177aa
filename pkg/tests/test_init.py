import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcwnet.init import (DegenerateBatchError, InitSpec, glorot_init, glorot_limit, initialize,
                         minibatch_rescale_init)
from lcwnet.linalg import Rng
from lcwnet.nn import Dense, build_mlp


def test_glorot_limit_hand_value():
    assert glorot_limit(3, 3) == 1.0


def test_glorot_support_and_variance():
    layer = Dense(316, 316)
    glorot_init(layer, Rng(4))
    a = glorot_limit(316, 316)
    w = layer.w.value
    assert np.all(np.abs(w) < a)
    assert abs(w.var() / (a * a / 3) - 1) < 0.05
    assert not layer.b.value.any()


def test_glorot_lcw_draws_free_coordinates():
    layer = Dense(50, 40, lcw=True)
    glorot_init(layer, Rng(4))
    assert np.all(np.abs(layer.v.value) < glorot_limit(50, 40))
    assert np.max(np.abs(layer.weight.sum(axis=1))) < 1e-10


def _rescaled_net(lcw, depth=6, width=32, seed=0, batchnorm=False):
    r = Rng(seed)
    net = build_mlp(20, width, depth, 5, lcw=lcw, batchnorm=batchnorm)
    x = r.normal(0, 1, (20, 64))
    minibatch_rescale_init(net, x, Rng(seed, 1))
    return net, x


def _preactivation_variances(net, x):
    net.forward(x, train=True)
    return [float(l.out.var()) for l in net.weighted_layers()]


@pytest.mark.parametrize("lcw", [False, True])
def test_unit_preactivation_variance(lcw):
    net, x = _rescaled_net(lcw)
    for v in _preactivation_variances(net, x):
        assert abs(v - 1) <= 1e-6


def test_unit_variance_with_batchnorm_keeps_running_stats():
    net, x = _rescaled_net(True, batchnorm=True)
    bns = [l for l in net.layers if l.kind == "batchnorm"]
    assert all(np.array_equal(b.running_mean, np.zeros(32)) for b in bns)
    assert all(np.array_equal(b.running_var, np.ones(32)) for b in bns)
    net.set_train_mode_stats(False)
    for v in _preactivation_variances(net, x):
        assert abs(v - 1) <= 1e-6


def test_deep_lcw_preactivation_variance_preserved():
    net, x = _rescaled_net(True, depth=20, width=64)
    assert np.allclose(_preactivation_variances(net, x), 1.0, atol=1e-6)


def test_rescaling_scales_std_linearly(rng):
    layer = Dense(10, 8)
    layer.w.value = rng.uniform(-1, 1, (8, 10))
    x = rng.normal(0, 1, (10, 50))
    base = layer.forward(x).std()
    layer.scale_weight(3.0)
    assert layer.forward(x).std() == pytest.approx(3.0 * base, rel=1e-12)


class _Recorder:
    """Captures each layer's weights just before it is rescaled."""

    def __init__(self, net, monkeypatch):
        self.before = {}
        for layer in net.weighted_layers():
            original = layer.scale_weight

            def spy(k, layer=layer, original=original):
                self.before[id(layer)] = layer.flat_weight().copy()
                original(k)

            monkeypatch.setattr(layer, "scale_weight", spy)


@pytest.mark.parametrize("lcw", [False, True])
def test_rescaling_preserves_direction(monkeypatch, lcw):
    r = Rng(3)
    net = build_mlp(12, 16, 4, 3, lcw=lcw)
    rec = _Recorder(net, monkeypatch)
    minibatch_rescale_init(net, r.normal(0, 1, (12, 40)), r)
    for layer in net.weighted_layers():
        before, after = rec.before[id(layer)].ravel(), layer.flat_weight().ravel()
        cos = before @ after / (np.linalg.norm(before) * np.linalg.norm(after))
        assert abs(cos - 1) < 1e-12


def test_rescaling_keeps_zero_sum():
    net, _ = _rescaled_net(True)
    for layer in net.weighted_layers():
        assert np.max(np.abs(layer.flat_weight().sum(axis=1))) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_init_deterministic(seed, lcw):
    a, _ = _rescaled_net(lcw, seed=seed)
    b, _ = _rescaled_net(lcw, seed=seed)
    for p, q in zip(a.params(), b.params()):
        assert np.array_equal(p.value, q.value)


def test_constant_batch_is_degenerate_for_lcw():
    net = build_mlp(8, 6, 3, 2, lcw=True)
    with pytest.raises(DegenerateBatchError, match="layer 0"):
        minibatch_rescale_init(net, np.full((8, 40), 0.7), Rng(0))


def test_small_batch_rejected():
    net = build_mlp(8, 6, 3, 2)
    with pytest.raises(ValueError, match="32"):
        initialize(net, InitSpec("minibatch_rescale"), Rng(0).normal(0, 1, (8, 31)), Rng(0))
    with pytest.raises(ValueError):
        initialize(net, InitSpec("minibatch_rescale"), None, Rng(0))


def test_unknown_scheme():
    with pytest.raises(ValueError):
        InitSpec("he_normal")


def test_initialize_glorot_dispatch():
    net = build_mlp(8, 6, 3, 2)
    initialize(net, InitSpec("glorot_uniform", 5))
    a = glorot_limit(8, 6)
    w = net.weighted_layers()[0].w.value
    assert w.any() and np.all(np.abs(w) < a)
