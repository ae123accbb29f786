import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmddpg import kernels
from mmddpg.errors import CacheError, ConfigError, InputError, ShapeError
from mmddpg.nn import (AdamState, Mlp, adam_step, flat_checksum, gradient_check, mlp_backward,
                       mlp_forward, negate, soft_update)


def tiny_net():
    W0 = np.array([[1.0, -1.0], [0.5, 2.0]])
    b0 = np.array([0.0, 0.1])
    W1 = np.array([[1.0, 1.0]])
    b1 = np.array([0.2])
    return Mlp([2, 2, 1], [W0, W1], [b0, b1], "tanh", "linear")


def test_forward_matches_hand_computation():
    y, _ = mlp_forward(tiny_net(), np.array([[0.3, 0.4]]))
    expected = math.tanh(0.3 - 0.4) + math.tanh(0.15 + 0.8 + 0.1) + 0.2
    assert y.shape == (1, 1)
    assert abs(y[0, 0] - expected) < 1e-15


def test_scaled_tanh_head_respects_bound(rng):
    net = Mlp.init([4, 8, 3], rng, "relu", "scaled_tanh", bound=2.5, final_scale=50.0)
    y, _ = mlp_forward(net, 10 * rng.standard_normal((64, 4)))
    assert np.all(np.abs(y) <= 2.5)


def test_relu_forward_zeroes_negative_preactivations():
    net = Mlp([1, 2, 1], [np.array([[1.0], [-1.0]]), np.array([[1.0, 1.0]])],
              [np.zeros(2), np.zeros(1)], "relu", "linear")
    y, _ = mlp_forward(net, np.array([[2.0], [-3.0]]))
    assert y[:, 0].tolist() == [2.0, 3.0]


def test_single_vector_input_is_promoted_to_batch():
    y, _ = mlp_forward(tiny_net(), np.array([0.3, 0.4]))
    assert y.shape == (1, 1)


@pytest.mark.parametrize("bad", [np.zeros((2, 3)), np.zeros((2, 2, 2))])
def test_forward_rejects_wrong_width(bad):
    with pytest.raises(ShapeError):
        mlp_forward(tiny_net(), bad)


def test_forward_rejects_non_finite_input():
    with pytest.raises(InputError):
        mlp_forward(tiny_net(), np.array([[np.nan, 0.0]]))


def test_init_bounds_and_final_scale(rng):
    net = Mlp.init([16, 32, 4], rng, final_scale=1e-3)
    assert np.max(np.abs(net.weights[0])) <= 1 / math.sqrt(16)
    assert np.max(np.abs(net.weights[1])) <= 1e-3 / math.sqrt(32)


def test_unknown_activation_rejected(rng):
    with pytest.raises(ConfigError):
        Mlp.init([2, 2, 1], rng, hidden_activation="sigmoid")


@pytest.mark.parametrize("hidden,head", [("tanh", "linear"), ("relu", "linear"),
                                         ("tanh", "scaled_tanh"), ("relu", "scaled_tanh")])
def test_backward_matches_finite_differences(rng, hidden, head):
    net = Mlp.init([3, 8, 8, 2], rng, hidden, head, bound=1.5)
    x = rng.standard_normal((4, 3))
    u = rng.standard_normal((4, 2))

    def loss():
        y, cache = mlp_forward(net, x)
        grads, _ = mlp_backward(net, cache, u)
        return float(np.sum(u * y)), grads

    report = gradient_check(net, loss, tolerance=1e-5)
    assert report.passed, report.block_errors
    assert report.max_abs_analytic > 0


def test_input_gradient_matches_finite_differences(rng):
    net = Mlp.init([3, 8, 1], rng, "tanh", "linear")
    x = rng.standard_normal((2, 3))
    _, cache = mlp_forward(net, x)
    _, gx = mlp_backward(net, cache, np.ones((2, 1)), param_grads=False)
    h = 1e-6
    for i in range(2):
        for j in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            fd = (mlp_forward(net, xp)[0].sum() - mlp_forward(net, xm)[0].sum()) / (2 * h)
            assert abs(fd - gx[i, j]) < 1e-8


def test_gradient_check_flags_a_wrong_gradient(rng):
    net = Mlp.init([2, 4, 1], rng)
    x = rng.standard_normal((3, 2))

    def loss():
        y, cache = mlp_forward(net, x)
        grads, _ = mlp_backward(net, cache, np.ones_like(y))
        return float(y.sum()), [2.0 * g for g in grads]

    assert not gradient_check(net, loss).passed


def test_param_grads_share_one_flat_buffer(rng):
    net = Mlp.init([3, 5, 2], rng)
    y, cache = mlp_forward(net, rng.standard_normal((4, 3)))
    grads, _ = mlp_backward(net, cache, np.ones_like(y))
    assert grads.flat.shape == net.flat.shape
    grads.flat[:] = 7.0
    assert all(np.all(g == 7.0) for g in grads)


def test_stale_cache_is_rejected(rng):
    net = Mlp.init([2, 4, 1], rng)
    y, cache = mlp_forward(net, rng.standard_normal((3, 2)))
    grads, _ = mlp_backward(net, cache, np.ones_like(y))
    adam_step(net, grads, AdamState.for_params(net))
    with pytest.raises(CacheError):
        mlp_backward(net, cache, np.ones_like(y))


def test_cache_from_another_network_is_rejected(rng):
    a, b = Mlp.init([2, 3, 1], rng), Mlp.init([2, 3, 1], rng)
    _, cache = mlp_forward(a, np.ones((1, 2)))
    with pytest.raises(CacheError):
        mlp_backward(b, cache, np.ones((1, 1)))


def test_backward_rejects_wrong_upstream_shape(rng):
    net = Mlp.init([2, 3, 1], rng)
    _, cache = mlp_forward(net, np.ones((4, 2)))
    with pytest.raises(ShapeError):
        mlp_backward(net, cache, np.ones((4, 2)))


def _adam_reference(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_matches_scalar_reference():
    p = [np.array([1.0])]
    state = AdamState.for_params(p, learning_rate=0.1)
    seq = [0.5, -0.2, 0.05, 1.5]
    for g in seq:
        adam_step(p, [np.array([g])], state)
    assert abs(p[0][0] - _adam_reference(1.0, seq, 0.1)) < 1e-15
    assert state.step_count == 4


def test_adam_first_step_moves_by_learning_rate():
    p = [np.array([3.0, -2.0])]
    adam_step(p, [np.array([0.7, -1e-3])], AdamState.for_params(p, learning_rate=0.01))
    np.testing.assert_allclose(p[0], [3.0 - 0.01, -2.0 + 0.01], rtol=0, atol=1e-7)


def test_fused_and_generic_adam_paths_agree_bitwise(rng):
    net = Mlp.init([3, 6, 2], rng)
    twin = net.copy()
    s_net, s_list = AdamState.for_params(net, 1e-2), AdamState.for_params(twin.parameters(), 1e-2)
    for _ in range(5):
        y, cache = mlp_forward(net, rng.standard_normal((4, 3)))
        grads, _ = mlp_backward(net, cache, rng.standard_normal(y.shape))
        adam_step(net, grads, s_net)
        adam_step(twin.parameters(), [g.copy() for g in grads], s_list)
    assert np.array_equal(net.flat, twin.flat)


def test_adam_shape_mismatch():
    p = [np.zeros(3)]
    with pytest.raises(ShapeError):
        adam_step(p, [np.zeros(2)], AdamState.for_params(p))


def test_negate_keeps_flat_backing(rng):
    net = Mlp.init([2, 3, 1], rng)
    y, cache = mlp_forward(net, np.ones((2, 2)))
    grads, _ = mlp_backward(net, cache, np.ones_like(y))
    neg = negate(grads)
    assert np.array_equal(neg.flat, -grads.flat)
    assert all(np.array_equal(a, -b) for a, b in zip(neg, grads))


@settings(max_examples=50, deadline=None)
@given(tau=st.floats(0.0, 1.0), seed=st.integers(0, 2**31 - 1))
def test_soft_update_contracts_distance(tau, seed):
    r = np.random.default_rng(seed)
    online, target = Mlp.init([3, 4, 2], r), Mlp.init([3, 4, 2], r)
    before = np.linalg.norm(target.flat - online.flat)
    soft_update(target, online, tau)
    after = np.linalg.norm(target.flat - online.flat)
    assert abs(after - (1 - tau) * before) <= 1e-12 * max(1.0, before)


def test_soft_update_endpoints_are_exact(rng):
    online, target = Mlp.init([3, 4, 2], rng), Mlp.init([3, 4, 2], rng)
    kept = target.flat.copy()
    soft_update(target, online, 0.0)
    assert np.array_equal(target.flat, kept)
    soft_update(target, online, 1.0)
    assert np.array_equal(target.flat, online.flat)


def test_soft_update_on_plain_lists():
    t, o = [np.zeros(3)], [np.ones(3)]
    soft_update(t, o, 0.25)
    assert np.array_equal(t[0], np.full(3, 0.25))


@pytest.mark.parametrize("tau", [-0.1, 1.5])
def test_soft_update_rejects_tau_outside_unit_interval(rng, tau):
    net = Mlp.init([2, 2, 1], rng)
    with pytest.raises(ConfigError):
        soft_update(net.copy(), net, tau)


def test_soft_update_rejects_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        soft_update(Mlp.init([2, 3, 1], rng), Mlp.init([2, 4, 1], rng), 0.5)


def test_copy_is_independent(rng):
    net = Mlp.init([2, 3, 1], rng)
    twin = net.copy()
    twin.flat[:] = 0.0
    assert np.any(net.flat != 0.0)
    assert twin.weights[0].base is twin.flat or np.shares_memory(twin.weights[0], twin.flat)


def test_checksum_changes_only_with_values(rng):
    net = Mlp.init([2, 3, 1], rng)
    c = flat_checksum(net)
    assert flat_checksum(net.copy()) == c
    net.biases[0][0] += 1e-12
    assert flat_checksum(net) != c


def test_lerp_kernel_backends_agree(rng):
    from mmddpg import _kernels_py
    compiled = kernels.compiled_module()
    if compiled is None:
        pytest.skip("compiled kernels not built")
    a, b = rng.standard_normal(1000), rng.standard_normal(1000)
    x, y = a.copy(), a.copy()
    compiled.lerp_inplace(x, b, 0.3)
    _kernels_py.lerp_inplace(y, b, 0.3)
    assert np.array_equal(x, y)
