import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from pseudo_action.errors import ConfigurationError
from pseudo_action.nn import (
    AdamState,
    ScalarParam,
    adam_step,
    directional_check,
    global_norm,
    gradient_check,
    init_mlp,
    mlp_backward,
    mlp_forward,
    polyak_update,
    tanh_gaussian_backward,
    tanh_gaussian_sample,
)


def regression_loss(inputs, targets):
    def loss_and_grad(params):
        activations = mlp_forward(params, inputs)
        error = activations[-1] - targets
        n = inputs.shape[0]
        grads, _ = mlp_backward(params, activations, error / n)
        return 0.5 * float(np.mean(np.sum(error * error, axis=1))), grads

    return loss_and_grad


def test_forward_matches_unit_by_unit_evaluation():
    rng = np.random.default_rng(0)
    net = init_mlp([5, 256, 256, 1], rng)
    for layer in net.layers:
        layer.bias[:] = rng.uniform(-0.1, 0.1, size=layer.bias.shape)
    inputs = rng.normal(size=(3, 5))
    output = mlp_forward(net, inputs)[-1]
    for row in range(3):
        hidden = list(inputs[row])
        for layer in net.layers:
            values = []
            for j in range(layer.out_dim):
                total = math.fsum(
                    [hidden[i] * layer.weight[i, j] for i in range(layer.in_dim)] + [layer.bias[0, j]]
                )
                values.append(max(total, 0.0) if layer.activation == "relu" else total)
            hidden = values
        assert output[row, 0] == pytest.approx(hidden[0], abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_mlp_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = init_mlp([4, 8, 8, 2], rng)
    inputs = rng.normal(size=(5, 4))
    targets = rng.normal(size=(5, 2))
    error = gradient_check(regression_loss(inputs, targets), net, max_entries=20, rng=rng)
    assert error < 1e-4


def test_directional_derivative_matches():
    rng = np.random.default_rng(3)
    net = init_mlp([4, 8, 1], rng)
    loss = regression_loss(rng.normal(size=(6, 4)), rng.normal(size=(6, 1)))
    direction = [rng.normal(size=a.shape) for a in net.arrays()]
    assert directional_check(loss, net, direction) < 1e-6


def test_gradient_check_catches_a_wrong_gradient():
    rng = np.random.default_rng(4)
    net = init_mlp([3, 6, 1], rng)
    loss = regression_loss(rng.normal(size=(4, 3)), rng.normal(size=(4, 1)))

    def doubled(params):
        value, grads = loss(params)
        return value, grads.with_arrays([2.0 * g for g in grads.arrays()])

    assert gradient_check(doubled, net) > 0.1


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    net = init_mlp([3, 8, 1], rng)
    x = rng.normal(size=(1, 3))
    activations = mlp_forward(net, x)
    _, grad_input = mlp_backward(net, activations, np.ones((1, 1)))
    h = 1e-6
    for i in range(3):
        shifted = x.copy()
        shifted[0, i] += h
        up = mlp_forward(net, shifted)[-1][0, 0]
        shifted[0, i] -= 2 * h
        down = mlp_forward(net, shifted)[-1][0, 0]
        assert grad_input[0, i] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)


def test_init_rejects_a_single_size():
    with pytest.raises(ConfigurationError):
        init_mlp([3], np.random.default_rng(0))


@pytest.mark.parametrize("mean, log_std", [(0.0, 0.0), (0.3, -0.5), (-1.2, 0.4)])
def test_squashed_density_integrates_to_one(mean, log_std):
    u = np.linspace(-12.0, 12.0, 40001).reshape(-1, 1)
    std = math.exp(log_std)
    sample = tanh_gaussian_sample(
        np.full_like(u, mean), np.full_like(u, log_std), (u - mean) / std
    )
    density = np.exp(sample.log_prob[:, 0])
    action = sample.action[:, 0]
    mass = trapezoid(density, action)
    assert mass == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("seed", range(10))
def test_squashed_head_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    noise = rng.normal(size=(3, 2))
    weights = rng.normal(size=(3, 2))

    def loss_and_grad(params):
        mean, log_std = params.data[:, :2], params.data[:, 2:]
        sample = tanh_gaussian_sample(mean, log_std, noise)
        loss = float(np.sum(weights * sample.action) + 0.3 * np.sum(sample.log_prob))
        grad_mean, grad_log_std = tanh_gaussian_backward(sample, weights, np.full((3, 1), 0.3))
        return loss, ScalarParam(np.hstack([grad_mean, grad_log_std]))

    heads = np.hstack([rng.uniform(-1.0, 1.0, (3, 2)), rng.uniform(-1.5, 0.5, (3, 2))])
    assert gradient_check(loss_and_grad, ScalarParam(heads)) < 1e-4


def test_log_std_outside_the_clamp_gets_no_gradient():
    sample = tanh_gaussian_sample(np.zeros((1, 1)), np.full((1, 1), 5.0), np.ones((1, 1)))
    assert sample.std[0, 0] == pytest.approx(math.exp(2.0))
    _, grad_log_std = tanh_gaussian_backward(sample, np.ones((1, 1)), np.ones((1, 1)))
    assert grad_log_std[0, 0] == 0.0


@given(st.floats(-30.0, 30.0), st.floats(-12.0, 4.0), st.floats(-5.0, 5.0))
@settings(max_examples=200, deadline=None)
def test_squashed_sample_is_finite_and_inside_the_bounds(mean, log_std, noise):
    sample = tanh_gaussian_sample(np.full((1, 1), mean), np.full((1, 1), log_std), np.full((1, 1), noise))
    assert np.isfinite(sample.log_prob).all()
    assert -1.0 < sample.action[0, 0] < 1.0


def test_adam_matches_hand_computation():
    params = ScalarParam.of(1.0)
    state = AdamState.create(params, learning_rate=0.1)
    params, state = adam_step(params, ScalarParam.of(0.5), state)
    m1, v1 = 0.05, 0.001 * 0.25
    expected = 1.0 - 0.1 * (m1 / 0.1) / (math.sqrt(v1 / 0.001) + 1e-8)
    assert params.value == pytest.approx(expected, abs=1e-15)
    params, state = adam_step(params, ScalarParam.of(-1.0), state)
    m2 = 0.9 * m1 + 0.1 * -1.0
    v2 = 0.999 * v1 + 0.001 * 1.0
    expected -= 0.1 * (m2 / (1 - 0.9**2)) / (math.sqrt(v2 / (1 - 0.999**2)) + 1e-8)
    assert params.value == pytest.approx(expected, abs=1e-14)
    assert state.step == 2


def test_adam_rejects_mismatched_gradients():
    net = init_mlp([2, 3, 1], np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        adam_step(net, ScalarParam.of(1.0), AdamState.create(net, 0.001))


@pytest.mark.parametrize("tau", [0.005, 0.1, 0.5])
def test_polyak_contracts_toward_online(tau):
    rng = np.random.default_rng(2)
    target, online = init_mlp([3, 5, 1], rng), init_mlp([3, 5, 1], rng)
    moved = polyak_update(target, online, tau)
    before = global_norm(target.with_arrays([t - o for t, o in zip(target.arrays(), online.arrays())]))
    after = global_norm(moved.with_arrays([t - o for t, o in zip(moved.arrays(), online.arrays())]))
    assert after == pytest.approx((1.0 - tau) * before, rel=1e-12)


def test_polyak_rejects_tau_outside_unit_interval():
    with pytest.raises(ConfigurationError, match="tau must lie in"):
        polyak_update(ScalarParam.of(0.0), ScalarParam.of(1.0), 1.5)
