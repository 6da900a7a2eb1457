import numpy as np

from .config import RunConfig
from .consts import Action
from .dqn import DqnAgent
from .envs import DynamicsEnv, EnvStepTransition, FrameStack, Pendulum, PushBar
from .errors import ConfigurationError
from .modes import Algo
from .sac import SacAgent


def make_env(
    name: str,
    frame_stack: int = 4,
    max_episode_steps: int | None = None,
) -> FrameStack:
    """
    Quickly create a frame-stacked task by name.

    Args:
        name (str): ``pendulum``, ``pushbar`` or ``integrator``.
        frame_stack (int): Number of stacked observations.
        max_episode_steps (int | None): Episode cap; ``None`` keeps the task's own.

    Returns:
        FrameStack: The wrapped task.

    Examples:
        >>> make_env("pendulum").obs_dim
        12
        >>> make_env("pushbar", frame_stack=1, max_episode_steps=50).spec.max_episode_steps
        50
        >>> make_env("cartpole")
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: unknown env 'cartpole'; known: pendulum, pushbar, integrator
    """
    factories = {"pendulum": Pendulum, "pushbar": PushBar, "integrator": DynamicsEnv}
    if name not in factories:
        raise ConfigurationError(f"unknown env {name!r}; known: {', '.join(factories)}")
    kwargs = {} if max_episode_steps is None else {"max_episode_steps": max_episode_steps}
    return FrameStack(factories[name](**kwargs), frame_stack)


def make_agent(
    config: RunConfig,
    env: FrameStack,
    rng: np.random.Generator,
) -> SacAgent | DqnAgent:
    """
    Quickly create the learner a config asks for, sized for ``env``.

    Examples:
        >>> import numpy as np
        >>> from pseudo_action.config import RunConfig
        >>> config = RunConfig(algo="dqn", hidden_dim=16)
        >>> agent = make_agent(config, make_env("pushbar"), np.random.default_rng(0))
        >>> type(agent).__name__, agent.n_actions, agent.epsilon
        ('DqnAgent', 3, 1.0)
    """
    spec = env.spec
    if config.algo == Algo.Sac:
        return SacAgent.create(
            env.obs_dim,
            spec.action_dim,
            spec.action_bound,
            rng,
            hidden_dim=config.hidden_dim,
            n_layers=config.n_layers,
            learning_rate=config.learning_rate,
            twin_q=config.twin_q,
        )
    return DqnAgent.create(
        env.obs_dim,
        spec.n_actions,
        rng,
        embedding_dim=config.embedding_dim,
        hidden_dim=config.hidden_dim,
        n_layers=config.n_layers,
        learning_rate=config.learning_rate,
        reward_clip=config.reward_clip,
        epsilon=config.epsilon_start,
    )


def make_episode(
    length: int,
    repeat: int,
    reward: float = 0.0,
    terminal: bool = False,
    closed: bool = True,
    discrete: bool = False,
    episode: int = 0,
) -> list[EnvStepTransition]:
    """
    Quickly create a chained toy episode for replay experiments.

    Step ``k`` observes ``[k]`` and moves to ``[k + 1]``; the action is the
    decision index ``k // repeat`` (as a vector, or modulo 3 as an id when
    ``discrete``). A closed episode ends on its last step, truncated unless
    ``terminal``.

    Examples:
        >>> steps = make_episode(5, repeat=2)
        >>> [float(t.action[0]) for t in steps], [t.decision_aligned for t in steps]
        ([0.0, 0.0, 1.0, 1.0, 2.0], [True, False, True, False, True])
        >>> steps[-1].truncated, steps[-1].terminal
        (True, False)
        >>> [t.action for t in make_episode(7, repeat=2, discrete=True)]
        [0, 0, 1, 1, 2, 2, 0]
    """
    steps = []
    for k in range(length):
        last = closed and k == length - 1
        action: Action = (k // repeat) % 3 if discrete else np.array([float(k // repeat)])
        steps.append(
            EnvStepTransition(
                obs=np.array([float(k)]),
                action=action,
                reward=float(reward),
                next_obs=np.array([float(k + 1)]),
                terminal=last and terminal,
                truncated=last and not terminal,
                env_step=k,
                decision_aligned=k % repeat == 0,
                episode=episode,
            )
        )
    return steps
