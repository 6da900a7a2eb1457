from dataclasses import replace

import numpy as np
import pytest
from conftest import make_batch

from pseudo_action.errors import ContractViolationError
from pseudo_action.modes import Activation
from pseudo_action.nn import Layer, MlpParams, ScalarParam, global_norm, gradient_check
from pseudo_action.sac import (
    SacAgent,
    policy_sample,
    q_value,
    sac_alpha_loss_and_grad,
    sac_policy_loss_and_grads,
    sac_q_loss_and_grads,
    sac_q_target,
)

STATE_DIM = 3


def small_agent(seed, action_dim=1, twin_q=False):
    return SacAgent.create(
        STATE_DIM, action_dim, 2.0, np.random.default_rng(seed), hidden_dim=8, twin_q=twin_q
    )


def batch_for(rng, action_dim=1, mode="canonical", **kwargs):
    return make_batch(rng, n=5, state_dim=STATE_DIM, action_dim=action_dim, mode=mode, action_scale=2.0, **kwargs)


@pytest.mark.parametrize("seed", range(10))
def test_q_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    agent = small_agent(seed, action_dim=2)
    batch = batch_for(rng, action_dim=2, mode="pseudo")
    noise = rng.normal(size=(5, 2))

    def loss_and_grad(params):
        loss, grads = sac_q_loss_and_grads(batch, replace(agent, q_params=params), noise)
        return loss, grads[0]

    assert gradient_check(loss_and_grad, agent.q_params, max_entries=25, rng=rng) < 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_policy_loss_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    agent = small_agent(seed, action_dim=2)
    batch = batch_for(rng, action_dim=2)
    noise = rng.normal(size=(5, 2))

    def loss_and_grad(params):
        loss, (grads,) = sac_policy_loss_and_grads(batch, replace(agent, policy_params=params), noise)
        return loss, grads

    assert gradient_check(loss_and_grad, agent.policy_params, max_entries=25, rng=rng) < 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_alpha_loss_gradient(seed):
    rng = np.random.default_rng(200 + seed)
    agent = replace(small_agent(seed), log_alpha=ScalarParam.of(rng.uniform(-3.0, 1.0)))
    batch = batch_for(rng)
    noise = rng.normal(size=(5, 1))

    def loss_and_grad(params):
        loss, (grad,) = sac_alpha_loss_and_grad(batch, replace(agent, log_alpha=params), noise)
        return loss, grad

    assert gradient_check(loss_and_grad, agent.log_alpha) < 1e-4


def test_twin_critics_each_get_their_own_gradient():
    rng = np.random.default_rng(7)
    agent = small_agent(7, twin_q=True)
    batch = batch_for(rng, mode="pseudo")
    noise = rng.normal(size=(5, 1))

    def second_critic(params):
        loss, grads = sac_q_loss_and_grads(batch, replace(agent, q2_params=params), noise)
        return loss, grads[1]

    assert gradient_check(second_critic, agent.q2_params, max_entries=25, rng=rng) < 1e-4


def test_twin_target_uses_the_smaller_critic():
    rng = np.random.default_rng(8)
    agent = replace(small_agent(8, twin_q=True), log_alpha=ScalarParam.of(-1000.0))
    batch = batch_for(rng)
    noise = rng.normal(size=(5, 1))
    _, sample = policy_sample(agent, batch.next_states, noise)
    smaller = np.minimum(
        q_value(agent.q_target, batch.next_states, sample.action),
        q_value(agent.q2_target, batch.next_states, sample.action),
    )
    expected = batch.reward_sum + batch.effective_discount * smaller
    np.testing.assert_array_equal(sac_q_target(batch, agent, noise), expected)


def test_terminal_rows_do_not_bootstrap():
    rng = np.random.default_rng(9)
    agent = small_agent(9)
    batch = batch_for(rng, terminal_rows=(1, 3))
    target = sac_q_target(batch, agent, rng.normal(size=(5, 1)))
    assert target[1, 0] == batch.reward_sum[1, 0]
    assert target[3, 0] == batch.reward_sum[3, 0]
    assert target[0, 0] != batch.reward_sum[0, 0]


def test_target_with_a_deterministic_policy_and_a_linear_critic():
    rng = np.random.default_rng(10)
    agent = replace(small_agent(10), log_alpha=ScalarParam.of(-1000.0))
    weight, bias = rng.normal(size=(STATE_DIM + 1, 1)), np.array([[0.5]])
    agent = replace(agent, q_target=MlpParams((Layer(weight, bias, Activation.Identity),)))
    batch = batch_for(rng)
    sample_noise = np.zeros((5, 1))
    _, sample = policy_sample(agent, batch.next_states, sample_noise)
    next_q = np.hstack([batch.next_states, sample.action]) @ weight + bias
    expected = batch.reward_sum + batch.effective_discount * next_q
    np.testing.assert_allclose(sac_q_target(batch, agent, sample_noise), expected, rtol=0, atol=1e-12)


def test_policy_loss_without_temperature_is_minus_mean_q():
    rng = np.random.default_rng(11)
    agent = replace(small_agent(11), log_alpha=ScalarParam.of(-1000.0))
    batch = batch_for(rng)
    noise = rng.normal(size=(5, 1))
    loss, _ = sac_policy_loss_and_grads(batch, agent, noise)
    _, sample = policy_sample(agent, batch.states, noise)
    assert loss == pytest.approx(-float(np.mean(q_value(agent.q_params, batch.states, sample.action))))


def tent_critic(peak):
    """Q(s, a) = -|a - peak|, ignoring the state."""
    first = np.zeros((STATE_DIM + 1, 2))
    first[-1] = [1.0, -1.0]
    return MlpParams(
        (
            Layer(first, np.array([[-peak, peak]]), Activation.Relu),
            Layer(np.array([[-1.0], [-1.0]]), np.zeros((1, 1)), Activation.Identity),
        )
    )


def constant_policy(mean, log_std=-3.0):
    return MlpParams(
        (Layer(np.zeros((STATE_DIM, 2)), np.array([[mean, log_std]]), Activation.Identity),),
        head_dim=1,
    )


def test_policy_at_the_critic_peak_has_zero_gradient():
    rng = np.random.default_rng(12)
    mean = 0.4
    batch = batch_for(rng)
    agent = replace(
        small_agent(12), policy_params=constant_policy(mean), log_alpha=ScalarParam.of(-1000.0)
    )
    _, sample = policy_sample(agent, batch.states, np.zeros((5, 1)))
    peak = float(sample.action[0, 0])
    agent = replace(agent, q_params=tent_critic(peak))
    loss, (grads,) = sac_policy_loss_and_grads(batch, agent, np.zeros((5, 1)))
    assert loss == 0.0
    assert global_norm(grads) < 1e-6

    moved = replace(agent, policy_params=constant_policy(mean + 0.3))
    loss, (grads,) = sac_policy_loss_and_grads(batch, moved, np.zeros((5, 1)))
    assert loss > 0.0
    assert grads.layers[0].bias[0, 0] > 0.0


def test_temperature_rises_when_the_policy_is_too_narrow():
    rng = np.random.default_rng(13)
    agent = replace(small_agent(13), policy_params=constant_policy(0.0, log_std=-6.0))
    batch = batch_for(rng)
    _, (grad,) = sac_alpha_loss_and_grad(batch, agent, rng.normal(size=(5, 1)))
    assert grad.value < 0.0
    _, stats = agent.actor_update(batch, rng)
    assert stats["alpha"] > agent.alpha


def test_actor_losses_refuse_pseudo_batches():
    rng = np.random.default_rng(14)
    agent = small_agent(14)
    batch = batch_for(rng, mode="pseudo")
    noise = rng.normal(size=(5, 1))
    with pytest.raises(ContractViolationError, match="canonical batches only"):
        sac_policy_loss_and_grads(batch, agent, noise)
    with pytest.raises(ContractViolationError):
        sac_alpha_loss_and_grad(batch, agent, noise)


def test_critic_refuses_discrete_batches():
    rng = np.random.default_rng(15)
    batch = make_batch(rng, state_dim=STATE_DIM, n_actions=3)
    with pytest.raises(ContractViolationError):
        sac_q_loss_and_grads(batch, small_agent(15), rng.normal(size=(4, 1)))


def test_updates_touch_only_their_own_parameters():
    rng = np.random.default_rng(16)
    agent = small_agent(16)
    batch = batch_for(rng)
    after_critic, stats = agent.critic_update(batch, rng)
    assert after_critic.q_updates == 1 and stats["q_loss"] >= 0.0
    assert after_critic.policy_params is agent.policy_params
    assert not np.array_equal(after_critic.q_params.layers[0].weight, agent.q_params.layers[0].weight)

    after_actor, _ = agent.actor_update(batch, rng)
    assert after_actor.q_params is agent.q_params
    assert after_actor.log_alpha.value != agent.log_alpha.value


def test_soft_update_moves_targets_by_tau():
    agent = small_agent(17)
    changed = replace(agent, q_params=agent.q_params.with_arrays([a + 1.0 for a in agent.q_params.arrays()]))
    moved = changed.soft_update(0.25)
    for before, after in zip(agent.q_target.arrays(), moved.q_target.arrays()):
        np.testing.assert_allclose(after, before + 0.25, rtol=0, atol=1e-12)


def test_greedy_action_is_deterministic_and_inside_the_bound():
    agent = small_agent(18)
    state = np.random.default_rng(0).normal(size=STATE_DIM)
    first = agent.act(state, explore=False, rng=np.random.default_rng(1))
    second = agent.act(state, explore=False, rng=np.random.default_rng(2))
    assert np.array_equal(first, second)
    explored = [agent.act(state, explore=True, rng=np.random.default_rng(k))[0] for k in range(50)]
    assert all(abs(a) < 2.0 for a in explored)
    assert len(set(explored)) > 1
