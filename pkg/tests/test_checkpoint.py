import dataclasses

import numpy as np
import pytest
from conftest import make_batch

from pseudo_action.checkpoint import load_checkpoint, save_checkpoint
from pseudo_action.dqn import DqnAgent
from pseudo_action.errors import SchemaError
from pseudo_action.nn import AdamState, MlpParams
from pseudo_action.sac import SacAgent


def trained_sac(twin_q):
    rng = np.random.default_rng(0)
    agent = SacAgent.create(3, 2, 2.0, rng, hidden_dim=8, twin_q=twin_q)
    batch = make_batch(rng, state_dim=3, action_dim=2, action_scale=2.0)
    agent, _ = agent.critic_update(batch, rng)
    agent, _ = agent.actor_update(batch, rng)
    return agent.soft_update(0.005)


def trained_dqn():
    rng = np.random.default_rng(1)
    agent = DqnAgent.create(3, 4, rng, hidden_dim=8, epsilon=0.2, reward_clip=False)
    agent, _ = agent.critic_update(make_batch(rng, state_dim=3, n_actions=4))
    return agent


def assert_same_value(a, b):
    if isinstance(a, AdamState):
        assert (a.step, a.learning_rate, a.beta1, a.beta2, a.eps) == (b.step, b.learning_rate, b.beta1, b.beta2, b.eps)
        pairs = zip((*a.first, *a.second), (*b.first, *b.second))
    elif hasattr(a, "arrays"):
        pairs = zip(a.arrays(), b.arrays())
        if isinstance(a, MlpParams):
            assert a.head_dim == b.head_dim
            assert [layer.activation for layer in a.layers] == [layer.activation for layer in b.layers]
    else:
        assert a == b and type(a) is type(b)
        return
    for x, y in pairs:
        assert x.dtype == y.dtype and np.array_equal(x, y)


@pytest.mark.parametrize("make", [lambda: trained_sac(False), lambda: trained_sac(True), trained_dqn])
def test_round_trip_is_bit_exact(tmp_path, make):
    agent = make()
    loaded = load_checkpoint(save_checkpoint(agent, tmp_path / "agent.npz", 1234, "algo = sac\n"))
    assert type(loaded.agent) is type(agent)
    assert loaded.env_step == 1234 and loaded.config_text == "algo = sac\n"
    for field in dataclasses.fields(agent):
        assert_same_value(getattr(agent, field.name), getattr(loaded.agent, field.name))


def test_loaded_agent_keeps_acting_the_same(tmp_path):
    agent = trained_sac(False)
    loaded = load_checkpoint(save_checkpoint(agent, tmp_path / "agent.npz")).agent
    state = np.linspace(-1.0, 1.0, 3)
    first = agent.act(state, explore=True, rng=np.random.default_rng(5))
    second = loaded.act(state, explore=True, rng=np.random.default_rng(5))
    assert np.array_equal(first, second)


def rewrite(path, **changes):
    with np.load(path) as archive:
        data = {key: archive[key] for key in archive.files}
    data.update(changes)
    with path.open("wb") as handle:
        np.savez(handle, **data)


def test_other_format_versions_are_refused(tmp_path):
    path = save_checkpoint(trained_dqn(), tmp_path / "agent.npz")
    rewrite(path, version=np.array(7))
    with pytest.raises(SchemaError, match="checkpoint format 7"):
        load_checkpoint(path)


def test_unknown_agent_types_are_refused(tmp_path):
    path = save_checkpoint(trained_dqn(), tmp_path / "agent.npz")
    rewrite(path, agent_type=np.array("ppo"))
    with pytest.raises(SchemaError, match="unknown agent type 'ppo'"):
        load_checkpoint(path)
