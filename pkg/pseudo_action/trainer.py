"""
Per-environment-step training cadence shared by both learners.
"""

from dataclasses import dataclass
from typing import Protocol, Union

import numpy as np

from .config import RunConfig
from .dqn import DqnAgent
from .errors import NonFiniteError, TrainingDivergedError
from .log import get_logger
from .modes import SampleMode
from .replay import PseudoBatch
from .sac import SacAgent

logger = get_logger(__name__)

Agent = Union[SacAgent, DqnAgent]


class BatchSource(Protocol):
    """What :func:`train_step` needs from a replay store."""

    def __len__(self) -> int: ...

    def sample(
        self,
        n: int,
        repeat: int,
        mode: SampleMode,
        rng: np.random.Generator,
        gamma: float = ...,
        canonical_weight: float = ...,
    ) -> PseudoBatch: ...


@dataclass(frozen=True)
class UpdateMetrics:
    """
    What one parameter update reports. SAC-only fields stay ``None`` for DQN
    and the other way round.
    """

    env_step: int
    q_loss: float
    grad_norm: float
    policy_loss: float | None = None
    alpha: float | None = None
    epsilon: float | None = None

    def is_finite(self) -> bool:
        values = (self.q_loss, self.grad_norm, self.policy_loss, self.alpha, self.epsilon)
        return all(np.isfinite(v) for v in values if v is not None)


def update_due(buffer_size: int, env_step: int, config: RunConfig) -> bool:
    """
    Whether a Q update happens after environment step ``env_step`` (1-based).

    Examples:
        >>> from pseudo_action.config import RunConfig
        >>> config = RunConfig()
        >>> [update_due(600, step, config) for step in (601, 602, 603, 604)]
        [False, False, False, True]
        >>> update_due(499, 500, config)
        False
    """
    return buffer_size >= config.min_replay and env_step % config.update_every == 0


def train_step(
    agent: Agent,
    buffer: BatchSource,
    config: RunConfig,
    env_step: int,
    rng: np.random.Generator,
    noise_rng: np.random.Generator | None = None,
) -> tuple[Agent, UpdateMetrics | None]:
    """
    Run whatever updates are due after environment step ``env_step``.

    Once the buffer holds ``min_replay`` steps, every ``update_every`` steps
    one Q update runs on a batch drawn in the run mode's sampler mode. SAC
    additionally updates the policy and the temperature on a fresh canonical
    batch every ``actor_update_freq`` Q updates. Target networks move by
    ``tau`` after each Q update.

    Args:
        agent: Current learner.
        buffer: Replay to draw batches from.
        config: Run settings.
        env_step: Environment steps taken so far in the run (1-based).
        rng: Draws the batches.
        noise_rng: Draws the policy noise (SAC); defaults to ``rng``.

    Returns:
        tuple[Agent, UpdateMetrics | None]: The updated agent and its metrics,
        or the unchanged agent and ``None`` when no update was due.

    Raises:
        TrainingDivergedError: A loss or gradient became non-finite.
    """
    if not update_due(len(buffer), env_step, config):
        return agent, None
    noise_rng = noise_rng if noise_rng is not None else rng
    sample_mode = config.mode.sample_mode
    try:
        batch = buffer.sample(
            config.batch_size, config.repeat, sample_mode, rng, config.gamma, config.canonical_weight
        )
        agent, stats = agent.critic_update(batch, noise_rng)
        _check_loss("q", stats["q_loss"], env_step)
        policy_loss = alpha = epsilon = None
        if isinstance(agent, SacAgent):
            alpha = agent.alpha
            if agent.q_updates % config.actor_update_freq == 0:
                canonical = buffer.sample(
                    config.batch_size, config.repeat, SampleMode.Canonical, rng, config.gamma
                )
                agent, actor_stats = agent.actor_update(canonical, noise_rng)
                policy_loss, alpha = actor_stats["policy_loss"], actor_stats["alpha"]
                _check_loss("policy", policy_loss, env_step)
        else:
            epsilon = agent.epsilon
        agent = agent.soft_update(config.tau)
    except TrainingDivergedError:
        raise
    except NonFiniteError as error:
        raise TrainingDivergedError(f"training diverged at env step {env_step}: {error}") from error

    metrics = UpdateMetrics(env_step, stats["q_loss"], stats["grad_norm"], policy_loss, alpha, epsilon)
    logger.debug("update at env step %d: %s", env_step, metrics)
    return agent, metrics


def _check_loss(which: str, value: float, env_step: int) -> None:
    if not np.isfinite(value):
        raise TrainingDivergedError(f"{which} loss is {value} at env step {env_step}")
