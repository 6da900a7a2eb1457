"""
Seedable control tasks at environment-step granularity, frame stacking, and
the action-repeat rollout driver that records every intermediate step.
"""

from collections import deque
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from .consts import FRAME_STACK, Action, ActionSelector, RealMatrix
from .errors import ConfigurationError, IntegrityError, InvalidActionError, NonFiniteError
from .log import get_logger
from .modes import ActionKind
from .verifier import get_dynamics, rk4_step

logger = get_logger(__name__)


@dataclass(frozen=True)
class EnvSpec:
    """
    Static description of a task.

    Examples:
        >>> spec = EnvSpec("pendulum", 3, ActionKind.Continuous, dt=0.05, action_bound=2.0)
        >>> spec.is_discrete
        False
        >>> EnvSpec("bad", 3, ActionKind.Continuous, dt=0.05, action_bound=float("inf"))
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: action bound must be finite and positive, got inf
    """

    name: str
    obs_dim: int
    action_kind: ActionKind
    dt: float
    action_dim: int = 1
    action_bound: float = 1.0
    n_actions: int = 0
    max_episode_steps: int | None = None

    def __post_init__(self) -> None:
        if self.action_kind == ActionKind.Continuous:
            if not (np.isfinite(self.action_bound) and self.action_bound > 0):
                raise ConfigurationError(
                    f"action bound must be finite and positive, got {self.action_bound}"
                )
        elif self.n_actions < 1:
            raise ConfigurationError(f"a discrete task needs actions, got {self.n_actions}")

    @property
    def is_discrete(self) -> bool:
        return self.action_kind == ActionKind.Discrete


@dataclass(frozen=True, eq=False)
class StepResult:
    obs: RealMatrix
    reward: float
    terminal: bool
    truncated: bool


class Environment(Protocol):
    spec: EnvSpec

    def reset(self, rng: np.random.Generator) -> RealMatrix: ...

    def step(self, action: Action) -> StepResult: ...


def wrap_angle(theta: float) -> float:
    """
    Map an angle to [-pi, pi).

    Examples:
        >>> import math
        >>> wrap_angle(3 * math.pi / 2) == -math.pi / 2
        True
        >>> wrap_angle(0.25)
        0.25
    """
    return float((theta + np.pi) % (2.0 * np.pi) - np.pi)


class Pendulum:
    """
    Torque-limited pendulum swing-up. ``theta = 0`` is upright.

    Semi-implicit Euler: the velocity is updated first and the new velocity
    moves the angle. Reward is scored on the pre-step state and torque.

    Examples:
        >>> import math
        >>> env = Pendulum()
        >>> env.set_state(0.0, 0.0)
        >>> result = env.step(0.0)
        >>> result.reward, env.theta, env.theta_dot
        (-0.0, 0.0, 0.0)
        >>> env.set_state(math.pi, 0.0)
        >>> env.step(0.0).reward == -math.pi**2
        True
        >>> env.step(float("nan"))
        Traceback (most recent call last):
        ...
        pseudo_action.errors.NonFiniteError: torque must be finite, got nan
    """

    gravity = 10.0
    mass = 1.0
    length = 1.0
    max_torque = 2.0
    max_speed = 8.0

    def __init__(self, dt: float = 0.05, max_episode_steps: int | None = 200):
        self.dt = dt
        self.spec = EnvSpec(
            "pendulum",
            3,
            ActionKind.Continuous,
            dt=dt,
            action_dim=1,
            action_bound=self.max_torque,
            max_episode_steps=max_episode_steps,
        )
        self.theta = 0.0
        self.theta_dot = 0.0
        self.steps = 0

    @property
    def _gravity_gain(self) -> float:
        return 3.0 * self.gravity / (2.0 * self.length)

    def reset(self, rng: np.random.Generator) -> RealMatrix:
        self.theta = float(rng.uniform(-np.pi, np.pi))
        self.theta_dot = float(rng.uniform(-1.0, 1.0))
        self.steps = 0
        return self.observe()

    def set_state(self, theta: float, theta_dot: float) -> None:
        self.theta, self.theta_dot = float(theta), float(theta_dot)

    def observe(self) -> RealMatrix:
        return np.array([np.cos(self.theta), np.sin(self.theta), self.theta_dot])

    def energy(self) -> float:
        """Conserved quantity of the torque-free continuous dynamics."""
        return 0.5 * self.theta_dot**2 + self._gravity_gain * float(np.cos(self.theta))

    def step(self, action: Action) -> StepResult:
        torque = float(np.asarray(action, dtype=np.float64).reshape(-1)[0])
        if not np.isfinite(torque):
            raise NonFiniteError(f"torque must be finite, got {torque}")
        torque = float(np.clip(torque, -self.max_torque, self.max_torque))
        reward = -(
            wrap_angle(self.theta) ** 2 + 0.1 * self.theta_dot**2 + 0.001 * torque**2
        )
        speed = (
            self.theta_dot
            + self._gravity_gain * np.sin(self.theta) * self.dt
            + 3.0 / (self.mass * self.length**2) * torque * self.dt
        )
        self.theta_dot = float(np.clip(speed, -self.max_speed, self.max_speed))
        self.theta = self.theta + self.theta_dot * self.dt
        self.steps += 1
        limit = self.spec.max_episode_steps
        return StepResult(self.observe(), reward, False, limit is not None and self.steps >= limit)


class PushBar:
    """
    A point mass on [-1, 1] pushed left, not at all, or right toward a target.

    Observation is ``(position, velocity, target)``. Holding the mass within
    ``tolerance`` of the target for ``hold_steps`` consecutive steps ends the
    episode with a bonus.

    Examples:
        >>> env = PushBar()
        >>> env.set_state(0.0, 0.0, target=0.5)
        >>> result = env.step(2)
        >>> round(env.velocity, 12), round(env.position, 12)
        (0.049, 0.00245)
        >>> env.set_state(0.3, 0.0, target=0.3)
        >>> env.step(1).reward == 0.0
        True
        >>> env.step(3)
        Traceback (most recent call last):
        ...
        pseudo_action.errors.InvalidActionError: action id must be one of 0, 1, 2; got 3
    """

    accelerations = (-1.0, 0.0, 1.0)
    friction = 0.98
    target_range = 0.8
    tolerance = 0.02
    hold_steps = 10
    bonus = 1.0

    def __init__(self, dt: float = 0.05, max_episode_steps: int | None = 400):
        self.dt = dt
        self.spec = EnvSpec(
            "pushbar",
            3,
            ActionKind.Discrete,
            dt=dt,
            n_actions=len(self.accelerations),
            max_episode_steps=max_episode_steps,
        )
        self.position = 0.0
        self.velocity = 0.0
        self.target = 0.0
        self.hold = 0
        self.steps = 0

    def reset(self, rng: np.random.Generator) -> RealMatrix:
        self.target = float(rng.uniform(-self.target_range, self.target_range))
        self.position = float(rng.uniform(-1.0, 1.0))
        self.velocity = 0.0
        self.hold = 0
        self.steps = 0
        return self.observe()

    def set_state(self, position: float, velocity: float, target: float) -> None:
        self.position, self.velocity, self.target = float(position), float(velocity), float(target)
        self.hold = 0

    def observe(self) -> RealMatrix:
        return np.array([self.position, self.velocity, self.target])

    def step(self, action: Action) -> StepResult:
        action_id = int(action)
        if action_id != action or not 0 <= action_id < len(self.accelerations):
            raise InvalidActionError(f"action id must be one of 0, 1, 2; got {action}")
        self.velocity = (self.velocity + self.accelerations[action_id] * self.dt) * self.friction
        self.position = self.position + self.velocity * self.dt
        if abs(self.position) > 1.0:
            self.position = float(np.clip(self.position, -1.0, 1.0))
            self.velocity = 0.0
        distance = abs(self.position - self.target)
        reward = -distance * self.dt
        self.hold = self.hold + 1 if distance < self.tolerance else 0
        terminal = self.hold >= self.hold_steps
        if terminal:
            reward += self.bonus
        self.steps += 1
        limit = self.spec.max_episode_steps
        truncated = not terminal and limit is not None and self.steps >= limit
        return StepResult(self.observe(), reward, terminal, truncated)


class DynamicsEnv:
    """
    Regulate one of the verifier's vector fields to the origin, one RK4 step
    per environment step. Reward is ``-(|x|^2 + 0.01 |u|^2) * dt``.

    Examples:
        >>> import numpy as np
        >>> env = DynamicsEnv("integrator")
        >>> env.state = np.array([0.5])
        >>> result = env.step(np.array([1.0]))
        >>> round(float(result.obs[0]), 12), round(result.reward, 12)
        (0.55, -0.013)
    """

    def __init__(
        self,
        dynamics: str = "integrator",
        dt: float = 0.05,
        max_episode_steps: int | None = 200,
        action_bound: float = 1.0,
    ):
        self.dynamics = get_dynamics(dynamics)
        self.dt = dt
        self.spec = EnvSpec(
            dynamics,
            self.dynamics.state_dim,
            ActionKind.Continuous,
            dt=dt,
            action_dim=self.dynamics.action_dim,
            action_bound=action_bound,
            max_episode_steps=max_episode_steps,
        )
        self.state = np.zeros(self.dynamics.state_dim)
        self.steps = 0

    def reset(self, rng: np.random.Generator) -> RealMatrix:
        self.state = rng.uniform(-1.0, 1.0, size=self.dynamics.state_dim)
        self.steps = 0
        return self.state.copy()

    def step(self, action: Action) -> StepResult:
        u = np.asarray(action, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(u)):
            raise NonFiniteError(f"action must be finite, got {u}")
        u = np.clip(u, -self.spec.action_bound, self.spec.action_bound)
        reward = -float(self.state @ self.state + 0.01 * u @ u) * self.dt
        self.state = rk4_step(self.dynamics, self.state, u, self.dt)
        self.steps += 1
        limit = self.spec.max_episode_steps
        return StepResult(self.state.copy(), reward, False, limit is not None and self.steps >= limit)


class FrameStack:
    """
    Concatenate the ``k`` most recent raw observations, oldest first.

    At reset the history is filled with copies of the first observation.

    Examples:
        >>> import numpy as np
        >>> env = FrameStack(Pendulum(), k=4)
        >>> obs = env.reset(np.random.default_rng(3))
        >>> obs.shape, env.obs_dim
        ((12,), 12)
        >>> bool(np.array_equal(obs[:3], obs[9:]))
        True
        >>> nxt = env.step(np.array([0.5])).obs
        >>> bool(np.array_equal(nxt[:9], obs[3:]))
        True
    """

    def __init__(self, env: Environment, k: int = FRAME_STACK):
        if k < 1:
            raise ConfigurationError(f"frame stack must be >= 1, got {k}")
        self.env = env
        self.k = k
        self._frames: deque[RealMatrix] = deque(maxlen=k)

    @property
    def spec(self) -> EnvSpec:
        return self.env.spec

    @property
    def obs_dim(self) -> int:
        return self.k * self.env.spec.obs_dim

    def _stacked(self) -> RealMatrix:
        return np.concatenate(list(self._frames))

    def reset(self, rng: np.random.Generator) -> RealMatrix:
        first = self.env.reset(rng)
        self._frames.clear()
        self._frames.extend(first for _ in range(self.k))
        return self._stacked()

    def step(self, action: Action) -> StepResult:
        result = self.env.step(action)
        self._frames.append(result.obs)
        return replace(result, obs=self._stacked())


@dataclass(frozen=True, eq=False)
class EnvStepTransition:
    """
    One environment step as stored in replay.

    Attributes:
        obs: Stacked observation before the step.
        action: Action vector (continuous) or action id (discrete).
        reward: Reward for this single step.
        next_obs: Stacked observation after the step.
        terminal: True environment termination.
        truncated: Time-limit cut-off.
        env_step: Index of the step within its episode.
        decision_aligned: The agent chose a fresh action at this step.
        episode: Episode counter of the rollout that produced it.
    """

    obs: RealMatrix
    action: Action
    reward: float
    next_obs: RealMatrix
    terminal: bool
    truncated: bool
    env_step: int
    decision_aligned: bool
    episode: int = 0

    def __post_init__(self) -> None:
        if self.terminal and self.truncated:
            raise IntegrityError(
                f"step {self.env_step} is flagged both terminal and truncated"
            )

    @property
    def ends_episode(self) -> bool:
        return self.terminal or self.truncated


class RepeatRollout:
    """
    Drive an environment with action repeats, one environment step at a time.

    ``select_action`` is called only at episode steps that are multiples of
    ``repeat``; the chosen action is replayed until the next decision point or
    the end of the episode. Each episode starts at a decision point.

    Examples:
        >>> import numpy as np
        >>> calls = []
        >>> def policy(obs):
        ...     calls.append(len(calls))
        ...     return np.array([float(len(calls))])
        >>> rollout = RepeatRollout(FrameStack(Pendulum(max_episode_steps=12), 1), policy, 4,
        ...                         np.random.default_rng(0))
        >>> steps = rollout.run(12)
        >>> len(calls), [t.env_step for t in steps if t.decision_aligned]
        (3, [0, 4, 8])
        >>> [float(t.action[0]) for t in steps[:5]]
        [1.0, 1.0, 1.0, 1.0, 2.0]
    """

    def __init__(
        self,
        env: FrameStack,
        select_action: ActionSelector,
        repeat: int,
        rng: np.random.Generator,
    ):
        if repeat < 1:
            raise ConfigurationError(f"repeat must be >= 1, got {repeat}")
        self.env = env
        self.select_action = select_action
        self.repeat = repeat
        self.rng = rng
        self.episode = -1
        self.episode_step = 0
        self.episode_return = 0.0
        self.completed_returns: list[float] = []
        self._obs: RealMatrix | None = None
        self._action: Action | None = None

    @property
    def episodes_completed(self) -> int:
        return len(self.completed_returns)

    def _begin_episode(self) -> RealMatrix:
        self.episode += 1
        self.episode_step = 0
        self.episode_return = 0.0
        return self.env.reset(self.rng)

    def step(self) -> EnvStepTransition:
        obs = self._obs if self._obs is not None else self._begin_episode()
        aligned = self.episode_step % self.repeat == 0
        if aligned:
            self._action = self.select_action(obs)
        result = self.env.step(self._action)
        transition = EnvStepTransition(
            obs=obs,
            action=self._action,
            reward=float(result.reward),
            next_obs=result.obs,
            terminal=bool(result.terminal),
            truncated=bool(result.truncated),
            env_step=self.episode_step,
            decision_aligned=aligned,
            episode=self.episode,
        )
        self.episode_return += transition.reward
        if transition.ends_episode:
            self.completed_returns.append(self.episode_return)
            logger.debug(
                "episode %d finished after %d steps, return %.3f",
                self.episode,
                self.episode_step + 1,
                self.episode_return,
            )
            self._obs = None
        else:
            self._obs = result.obs
            self.episode_step += 1
        return transition

    def run(self, n_env_steps: int, buffer=None) -> list[EnvStepTransition]:
        transitions = []
        for _ in range(n_env_steps):
            transition = self.step()
            if buffer is not None:
                buffer.push(transition)
            transitions.append(transition)
        return transitions


def rollout_with_repeats(
    env: FrameStack,
    select_action: ActionSelector,
    repeat: int,
    n_env_steps: int,
    buffer=None,
    rng: np.random.Generator | None = None,
) -> list[EnvStepTransition]:
    """
    Roll out ``n_env_steps`` environment steps with action repeats and push
    every step into ``buffer`` (when given).

    Examples:
        >>> import numpy as np
        >>> env = FrameStack(PushBar(max_episode_steps=5), 1)
        >>> steps = rollout_with_repeats(env, lambda obs: 2, 8, 5, rng=np.random.default_rng(1))
        >>> len(steps), sum(t.decision_aligned for t in steps), steps[-1].truncated
        (5, 1, True)
    """
    rng = rng if rng is not None else np.random.default_rng()
    return RepeatRollout(env, select_action, repeat, rng).run(n_env_steps, buffer)


def decision_points(transitions: Sequence[EnvStepTransition]) -> int:
    """Number of steps at which a fresh action was chosen."""
    return sum(1 for t in transitions if t.decision_aligned)
