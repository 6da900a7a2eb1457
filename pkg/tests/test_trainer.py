from dataclasses import replace

import numpy as np
import pytest
from conftest import fill

from pseudo_action.config import RunConfig
from pseudo_action.dqn import DqnAgent
from pseudo_action.envs import RepeatRollout
from pseudo_action.errors import TrainingDivergedError
from pseudo_action.modes import SampleMode
from pseudo_action.qol import make_agent, make_env, make_episode
from pseudo_action.replay import PseudoBatch, ReplayBuffer
from pseudo_action.sac import SacAgent
from pseudo_action.trainer import train_step, update_due


class AgentStepBuffer:
    """
    Replay that only ever sees agent steps: one row per completed repeat
    block, summed reward, the held action, the state after the block.
    """

    def __init__(self, repeat):
        self.repeat = repeat
        self.items = []
        self.pending = []
        self.env_steps = 0

    def push(self, transition):
        self.env_steps += 1
        if transition.decision_aligned:
            self.pending = []
        self.pending.append(transition)
        if len(self.pending) == self.repeat:
            first, last = self.pending[0], self.pending[-1]
            self.items.append(
                (first.obs, first.action, [t.reward for t in self.pending], last.next_obs, last.terminal)
            )
        if transition.ends_episode:
            self.pending = []

    def __len__(self):
        return self.env_steps

    def sample(self, n, repeat, mode, rng, gamma=0.99**0.25, canonical_weight=1.0):
        picks = rng.integers(0, len(self.items), size=n)
        rows = [self.items[i] for i in picks]
        discrete = isinstance(rows[0][1], (int, np.integer))
        step_rewards = np.array([r[2] for r in rows], dtype=np.float64)
        return PseudoBatch(
            states=np.stack([r[0] for r in rows]),
            actions=None if discrete else np.stack([np.asarray(r[1], dtype=np.float64).reshape(-1) for r in rows]),
            action_windows=np.array([[r[1]] * repeat for r in rows], dtype=np.int64) if discrete else None,
            step_rewards=step_rewards,
            reward_sum=step_rewards.sum(axis=1, keepdims=True),
            next_states=np.stack([r[3] for r in rows]),
            bootstrap_mask=np.array([0.0 if r[4] else 1.0 for r in rows]).reshape(-1, 1),
            effective_discount=gamma**repeat,
            is_canonical=np.ones(n, dtype=bool),
            mode=SampleMode.Canonical,
            repeat=repeat,
            starts=tuple((0, int(i)) for i in picks),
        )


class LatestAgent:
    def __init__(self, agent, rng):
        self.agent, self.rng = agent, rng

    def __call__(self, obs):
        return self.agent.act(obs, explore=True, rng=self.rng)


def train(config, buffer, seed=0):
    """Drive one run by hand; return every transition, every metric and the agent."""
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]
    init_rng, env_rng, act_rng, sample_rng, noise_rng = rngs
    env = make_env(config.env, frame_stack=2)
    actor = LatestAgent(make_agent(config, env, init_rng), act_rng)
    rollout = RepeatRollout(env, actor, config.repeat, env_rng)
    transitions, metrics = [], []
    for env_step in range(1, config.total_steps + 1):
        transition = rollout.step()
        buffer.push(transition)
        transitions.append(transition)
        actor.agent, update = train_step(actor.agent, buffer, config, env_step, sample_rng, noise_rng)
        if update is not None:
            metrics.append(update)
    return transitions, metrics, actor.agent


def agent_arrays(agent):
    if isinstance(agent, SacAgent):
        sets = [agent.q_params, agent.q_target, agent.policy_params, agent.log_alpha]
    else:
        sets = [agent.q_params, agent.q_target, agent.embed, agent.embed_target]
    return [a for params in sets for a in params.arrays()]


def assert_same_run(first, second):
    (steps_a, metrics_a, agent_a), (steps_b, metrics_b, agent_b) = first, second
    assert len(steps_a) == len(steps_b)
    for a, b in zip(steps_a, steps_b):
        assert np.array_equal(a.obs, b.obs) and np.array_equal(a.action, b.action)
        assert a.reward == b.reward
    assert metrics_a == metrics_b
    for a, b in zip(agent_arrays(agent_a), agent_arrays(agent_b)):
        assert np.array_equal(a, b)


def sac_config(**changes):
    return RunConfig(algo="sac", hidden_dim=16, **changes)


def test_update_cadence_after_warmup():
    config = sac_config(repeat=4, batch_size=8)
    buffer = fill(ReplayBuffer(), make_episode(600, repeat=4))
    agent = SacAgent.create(1, 1, 1.0, np.random.default_rng(0), hidden_dim=8)
    rng = np.random.default_rng(1)
    updates = []
    for env_step in range(601, 1001):
        agent, metrics = train_step(agent, buffer, config, env_step, rng)
        if metrics is not None:
            updates.append(metrics)
    assert len(updates) == 100 and agent.q_updates == 100
    assert sum(m.policy_loss is not None for m in updates) == 50
    assert [m.env_step for m in updates[:3]] == [604, 608, 612]


def test_no_update_before_min_replay():
    config = sac_config()
    buffer = fill(ReplayBuffer(), make_episode(499, repeat=4))
    agent = SacAgent.create(1, 1, 1.0, np.random.default_rng(0), hidden_dim=8)
    same, metrics = train_step(agent, buffer, config, 500, np.random.default_rng(0))
    assert same is agent and metrics is None
    assert not update_due(len(buffer), 500, config)


def test_dqn_updates_report_epsilon_and_no_actor_fields():
    config = RunConfig(algo="dqn", batch_size=8, hidden_dim=8, min_replay=100)
    buffer = fill(ReplayBuffer(), make_episode(120, repeat=4, discrete=True))
    agent = DqnAgent.create(1, 3, np.random.default_rng(0), hidden_dim=8, epsilon=0.3)
    agent, metrics = train_step(agent, buffer, config, 120, np.random.default_rng(1))
    assert metrics.epsilon == 0.3 and metrics.policy_loss is None and metrics.alpha is None
    assert metrics.is_finite()


@pytest.mark.parametrize("algo", ["sac", "dqn"])
def test_modes_coincide_at_repeat_one(algo):
    base = RunConfig(algo=algo, repeat=1, hidden_dim=8, batch_size=8, total_steps=900, mode="baseline")
    pseudo = base.replace(mode="pseudo")
    assert_same_run(train(base, ReplayBuffer()), train(pseudo, ReplayBuffer()))


def test_baseline_batches_equal_agent_step_batches():
    repeat = 4
    replay, reference = ReplayBuffer(), AgentStepBuffer(repeat)
    env = make_env("pendulum", frame_stack=2, max_episode_steps=50)
    rng = np.random.default_rng(3)
    rollout = RepeatRollout(env, lambda obs: rng.uniform(-2.0, 2.0, size=1), repeat, rng)
    for transition in rollout.run(1_000):
        replay.push(transition)
        reference.push(transition)
    ours = replay.sample(64, repeat, SampleMode.Canonical, np.random.default_rng(4))
    theirs = reference.sample(64, repeat, SampleMode.Canonical, np.random.default_rng(4))
    for name in ("states", "actions", "step_rewards", "reward_sum", "next_states", "bootstrap_mask", "is_canonical"):
        assert np.array_equal(getattr(ours, name), getattr(theirs, name)), name
    assert ours.effective_discount == theirs.effective_discount


def test_baseline_training_equals_agent_step_training():
    config = sac_config(repeat=4, total_steps=5_000, mode="baseline")
    assert_same_run(train(config, ReplayBuffer()), train(config, AgentStepBuffer(4)))


def test_discrete_baseline_training_equals_agent_step_training():
    config = RunConfig(algo="dqn", repeat=4, hidden_dim=16, total_steps=2_000, mode="baseline")
    assert_same_run(train(config, ReplayBuffer()), train(config, AgentStepBuffer(4)))


def test_pseudo_mode_smoke_run_stays_finite():
    config = sac_config(env="integrator", repeat=8, total_steps=10_000, mode="pseudo")
    _, metrics, agent = train(config, ReplayBuffer())
    assert len(metrics) == (10_000 - 500) // 4 + 1
    assert all(m.is_finite() for m in metrics)
    assert agent.alpha > 0.0


def test_non_finite_losses_raise_training_diverged():
    config = sac_config()
    buffer = fill(ReplayBuffer(), make_episode(600, repeat=4))
    agent = SacAgent.create(1, 1, 1.0, np.random.default_rng(0), hidden_dim=8)
    broken = replace(agent, q_params=agent.q_params.with_arrays([a * np.nan for a in agent.q_params.arrays()]))
    with pytest.raises(TrainingDivergedError, match="env step 604"):
        train_step(broken, buffer, config, 604, np.random.default_rng(0))
