import numpy as np
import pytest

from pseudo_action.modes import SampleMode
from pseudo_action.replay import PseudoBatch, ReplayBuffer


def make_batch(
    rng: np.random.Generator,
    n: int = 4,
    state_dim: int = 3,
    action_dim: int | None = 1,
    n_actions: int | None = None,
    repeat: int = 4,
    mode: str = "canonical",
    terminal_rows: tuple[int, ...] = (),
    gamma: float = 0.99,
    action_scale: float = 1.0,
) -> PseudoBatch:
    """A random batch shaped like the sampler's output."""
    step_rewards = rng.normal(size=(n, repeat))
    mask = np.ones((n, 1))
    mask[list(terminal_rows)] = 0.0
    discrete = n_actions is not None
    return PseudoBatch(
        states=rng.normal(size=(n, state_dim)),
        actions=None if discrete else action_scale * rng.uniform(-0.9, 0.9, size=(n, action_dim)),
        action_windows=rng.integers(0, n_actions, size=(n, repeat)) if discrete else None,
        step_rewards=step_rewards,
        reward_sum=step_rewards.sum(axis=1, keepdims=True),
        next_states=rng.normal(size=(n, state_dim)),
        bootstrap_mask=mask,
        effective_discount=gamma,
        is_canonical=np.full(n, mode == "canonical"),
        mode=SampleMode(mode),
        repeat=repeat,
        starts=tuple((0, i) for i in range(n)),
    )


def fill(buffer: ReplayBuffer, steps) -> ReplayBuffer:
    for step in steps:
        buffer.push(step)
    return buffer


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
