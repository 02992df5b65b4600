import numpy as np
import pytest

from mucran.errors import ConfigError
from mucran.nn import Dense, Network
from mucran.optim import SGD, Adam, make_optimizer

from helpers import scalar_adam_step


def _one_param_net(value):
    layer = Dense(1, 1)
    layer.weight[:] = value
    layer.bias[:] = 0.0
    return Network([layer]), layer


def test_sgd_single_step_arithmetic():
    net, layer = _one_param_net(1.0)
    layer.gweight[:] = 1.0
    opt = SGD(lr=0.1, momentum=0.0)
    opt.step(net)
    assert layer.weight[0, 0] == pytest.approx(0.9)


def test_sgd_momentum_accumulates():
    net, layer = _one_param_net(0.0)
    opt = SGD(lr=1.0, momentum=0.5)
    layer.gweight[:] = 1.0
    opt.step(net)          # v=1, p=-1
    layer.gweight[:] = 1.0
    opt.step(net)          # v=1.5, p=-2.5
    assert layer.weight[0, 0] == pytest.approx(-2.5)


def test_adam_matches_scalar_oracle():
    rng = np.random.default_rng(5)
    layer = Dense(3, 2, rng=rng, dtype=np.float64)
    net = Network([layer])
    opt = Adam(lr=1e-2, beta1=0.5, beta2=0.999, eps=1e-8)

    ref_w = layer.weight.copy()
    ref_b = layer.bias.copy()
    m = [np.zeros_like(ref_w), np.zeros_like(ref_b)]
    v = [np.zeros_like(ref_w), np.zeros_like(ref_b)]

    for t in range(1, 6):
        gw = rng.standard_normal(ref_w.shape)
        gb = rng.standard_normal(ref_b.shape)
        layer.gweight[:] = gw
        layer.gbias[:] = gb
        opt.step(net)
        for ref, grad, mm, vv in ((ref_w, gw, m[0], v[0]), (ref_b, gb, m[1], v[1])):
            it = np.nditer(ref, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                ref[idx], mm[idx], vv[idx] = scalar_adam_step(
                    ref[idx], grad[idx], mm[idx], vv[idx], t, 1e-2, 0.5, 0.999, 1e-8)
        np.testing.assert_allclose(layer.weight, ref_w, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(layer.bias, ref_b, rtol=1e-12, atol=1e-14)


def test_adam_moments_match_param_shapes():
    rng = np.random.default_rng(6)
    net = Network([Dense(4, 3, rng=rng)])
    opt = Adam()
    net.forward(np.ones((1, 4), dtype=np.float32))
    net.backward(np.ones((1, 3), dtype=np.float32))
    opt.step(net)
    params = net.params()
    state = opt.state_arrays()
    assert len(state) == len(params)
    for (li, pi), tensors in state.items():
        p = net.layers[li].params()[pi]
        for t in tensors:
            assert t.shape == p.shape


def test_step_counter_increments_and_grads_reset():
    net, layer = _one_param_net(1.0)
    opt = SGD(lr=0.1)
    layer.gweight[:] = 1.0
    assert opt.step_count == 0
    opt.step(net)
    assert opt.step_count == 1
    assert not layer.gweight.any() and not layer.gbias.any()
    opt.step(net)
    assert opt.step_count == 2


def test_frozen_layer_params_bit_identical_after_step():
    rng = np.random.default_rng(7)
    net = Network([Dense(3, 3, rng=rng), Dense(3, 2, rng=rng)])
    net.layers[0].frozen = True
    before = [p.copy() for p in net.layers[0].params()]
    for layer in net.layers:
        for g in layer.grads():
            g[:] = 1.0
    Adam(lr=0.5).step(net)
    for b, a in zip(before, net.layers[0].params()):
        assert np.array_equal(b, a)
    # the unfrozen layer did move
    assert (net.layers[1].weight != 0).any()


def test_step_invalidates_forward_cache():
    from mucran.errors import UsageError
    net, layer = _one_param_net(1.0)
    net.forward(np.ones((1, 1), dtype=np.float32))
    layer.gweight[:] = 1.0
    SGD(lr=0.1).step(net)
    with pytest.raises(UsageError):
        net.backward(np.ones((1, 1), dtype=np.float32))


def test_make_optimizer_and_validation():
    assert isinstance(make_optimizer("sgd", lr=0.1), SGD)
    assert isinstance(make_optimizer("adam"), Adam)
    with pytest.raises(ConfigError):
        make_optimizer("rmsprop")
    with pytest.raises(ConfigError):
        SGD(lr=0.0)
    with pytest.raises(ConfigError):
        Adam(beta1=1.0)
