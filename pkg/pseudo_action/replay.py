"""
Environment-step replay and the window sampler.

The buffer keeps every environment step, grouped by episode. A training row
is built from a window of ``T`` consecutive steps of one episode: the state at
the window start, the state after the last step, the summed reward and the
pseudo-action (mean of the ``T`` actions for continuous tasks, the raw action
ids for discrete tasks, whose embeddings are averaged by the agent).
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .consts import GAMMA_ENV, REPLAY_FORMAT_VERSION, Action, IntArray, RealMatrix
from .envs import EnvStepTransition
from .errors import (
    ConfigurationError,
    InsufficientDataError,
    IntegrityError,
    SchemaError,
)
from .log import get_logger
from .modes import SampleMode

logger = get_logger(__name__)

# windows that start strictly between decision points
_BETWEEN = "between"


@dataclass(frozen=True, eq=False)
class PseudoBatch:
    """
    A training mini-batch of ``N`` windows of length ``repeat``.

    Attributes:
        states: ``(N, S)`` states at the window starts.
        actions: ``(N, A)`` pseudo-actions (continuous tasks), else ``None``.
        action_windows: ``(N, T)`` action ids (discrete tasks), else ``None``.
        step_rewards: ``(N, T)`` per-step rewards.
        reward_sum: ``(N, 1)`` undiscounted window reward.
        next_states: ``(N, S)`` states after the last step of each window.
        bootstrap_mask: ``(N, 1)``; 0 where the window ends in a terminal step.
        effective_discount: ``gamma_env ** repeat``.
        is_canonical: ``(N,)`` whether each window starts on a decision point.
        mode: Sampler mode the batch was drawn in.
        repeat: Window length ``T``.
        starts: ``(episode, index)`` of every row.
    """

    states: RealMatrix
    actions: RealMatrix | None
    action_windows: IntArray | None
    step_rewards: RealMatrix
    reward_sum: RealMatrix
    next_states: RealMatrix
    bootstrap_mask: RealMatrix
    effective_discount: float
    is_canonical: np.ndarray
    mode: SampleMode
    repeat: int
    starts: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.action_windows is not None


def pseudo_action_continuous(actions: Sequence[Action]) -> RealMatrix:
    """
    Mean of the ``T`` action vectors of a window.

    Computed as ``a_0 + mean(a_t - a_0)`` so a window of identical actions
    returns that action bit for bit.

    Examples:
        >>> pseudo_action_continuous([[1.0], [1.0], [1.0], [-1.0]]).tolist()
        [0.5]
        >>> pseudo_action_continuous([[0.2, -0.4], [0.6, 0.0]]).round(12).tolist()
        [0.4, -0.2]
        >>> pseudo_action_continuous([[0.1, 0.7]] * 3).tolist()
        [0.1, 0.7]
        >>> pseudo_action_continuous([])
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: a pseudo-action needs at least one action
    """
    if len(actions) == 0:
        raise ConfigurationError("a pseudo-action needs at least one action")
    stacked = np.stack([np.asarray(a, dtype=np.float64).reshape(-1) for a in actions])
    first = stacked[0]
    return first + (stacked - first).mean(axis=0)


class ReplayBuffer:
    """
    Unbounded replay of environment steps, grouped by episode.

    Examples:
        >>> from pseudo_action.qol import make_episode
        >>> buffer = ReplayBuffer()
        >>> for t in make_episode(5, repeat=2, closed=False):
        ...     buffer.push(t)
        >>> len(buffer), buffer.n_episodes, buffer.is_open
        (5, 1, True)

        >>> buffer = ReplayBuffer()
        >>> for t in make_episode(3, repeat=1, terminal=True):
        ...     buffer.push(t)
        >>> buffer.is_open
        False
        >>> buffer.push(make_episode(2, repeat=1)[0])
        >>> buffer.n_episodes, len(buffer[1])
        (2, 1)
    """

    def __init__(self) -> None:
        self._episodes: list[list[EnvStepTransition]] = []
        self._open = False
        self._size = 0
        self._windows: dict[tuple[int, str], list[tuple[int, int]]] = {}

    @property
    def episodes(self) -> tuple[tuple[EnvStepTransition, ...], ...]:
        return tuple(tuple(episode) for episode in self._episodes)

    @property
    def n_episodes(self) -> int:
        return len(self._episodes)

    @property
    def is_open(self) -> bool:
        """Whether the last episode can still be extended."""
        return self._open

    def push(self, transition: EnvStepTransition) -> None:
        """
        Store one environment step.

        Examples:
            >>> import numpy as np
            >>> from pseudo_action.qol import make_episode
            >>> first, second = make_episode(2, repeat=1)
            >>> buffer = ReplayBuffer()
            >>> buffer.push(first)
            >>> from dataclasses import replace
            >>> buffer.push(replace(second, obs=np.array([9.0])))
            Traceback (most recent call last):
            ...
            pseudo_action.errors.IntegrityError: episode 0 step 1: obs does not match the previous next_obs
        """
        if self._open:
            episode = self._episodes[-1]
            previous = episode[-1]
            where = f"episode {len(self._episodes) - 1} step {transition.env_step}"
            if transition.episode != previous.episode:
                raise IntegrityError(f"{where}: belongs to rollout episode {transition.episode}")
            if transition.env_step != len(episode):
                raise IntegrityError(f"{where}: expected step index {len(episode)}")
            if not np.array_equal(previous.next_obs, transition.obs):
                raise IntegrityError(f"{where}: obs does not match the previous next_obs")
        else:
            if transition.env_step != 0:
                raise IntegrityError(
                    f"a new episode must start at step 0, got step {transition.env_step}"
                )
            self._episodes.append([])
            self._open = True
            episode = self._episodes[-1]
        episode.append(transition)
        self._size += 1
        episode_index, position = len(self._episodes) - 1, len(episode) - 1
        for (repeat, kind), starts in self._windows.items():
            start = position - repeat + 1
            if start >= 0 and self._window_ok(episode, start, repeat, kind):
                starts.append((episode_index, start))
        if transition.ends_episode:
            self._open = False

    @staticmethod
    def _window_ok(
        episode: Sequence[EnvStepTransition], start: int, repeat: int, kind: str
    ) -> bool:
        window = episode[start : start + repeat]
        if len(window) < repeat or any(t.ends_episode for t in window[:-1]):
            return False
        if kind == SampleMode.Canonical:
            return window[0].decision_aligned
        if kind == _BETWEEN:
            return not window[0].decision_aligned
        return True

    def _starts(self, repeat: int, kind: str) -> list[tuple[int, int]]:
        key = (repeat, kind)
        if key not in self._windows:
            self._windows[key] = [
                (e, start)
                for e, episode in enumerate(self._episodes)
                for start in range(len(episode) - repeat + 1)
                if self._window_ok(episode, start, repeat, kind)
            ]
        return self._windows[key]

    def window_starts(self, repeat: int, mode: SampleMode | str) -> list[tuple[int, int]]:
        """Cached list of valid ``(episode, index)`` window starts."""
        if repeat < 1:
            raise ConfigurationError(f"repeat must be >= 1, got {repeat}")
        return self._starts(repeat, str(SampleMode(mode)))

    def window(self, episode: int, start: int, repeat: int) -> list[EnvStepTransition]:
        return self._episodes[episode][start : start + repeat]

    def sample(
        self,
        n: int,
        repeat: int,
        mode: SampleMode | str,
        rng: np.random.Generator,
        gamma: float = GAMMA_ENV,
        canonical_weight: float = 1.0,
    ) -> PseudoBatch:
        return sample_batch(self, n, repeat, mode, rng, gamma, canonical_weight)

    def clear(self) -> None:
        self._episodes.clear()
        self._windows.clear()
        self._open = False
        self._size = 0

    def save(self, path: str | Path) -> Path:
        """
        Dump every stored step to an ``.npz`` archive.

        Per-step fields, in order: episode, env_step, obs, action, reward,
        terminal, truncated, decision_aligned, next_obs, rollout_episode.
        """
        path = Path(path)
        steps = list(self)
        if not steps:
            raise InsufficientDataError("nothing to save: the buffer is empty")
        discrete = isinstance(steps[0].action, (int, np.integer))
        episode_ids = [e for e, episode in enumerate(self._episodes) for _ in episode]
        if discrete:
            actions = np.array([int(t.action) for t in steps], dtype=np.int64)
        else:
            actions = np.stack([np.asarray(t.action, dtype=np.float64).reshape(-1) for t in steps])
        with path.open("wb") as handle:
            np.savez(
                handle,
                version=np.array(REPLAY_FORMAT_VERSION),
                discrete=np.array(discrete),
                episode=np.array(episode_ids, dtype=np.int64),
                env_step=np.array([t.env_step for t in steps], dtype=np.int64),
                obs=np.stack([t.obs for t in steps]),
                action=actions,
                reward=np.array([t.reward for t in steps], dtype=np.float64),
                terminal=np.array([t.terminal for t in steps]),
                truncated=np.array([t.truncated for t in steps]),
                decision_aligned=np.array([t.decision_aligned for t in steps]),
                next_obs=np.stack([t.next_obs for t in steps]),
                rollout_episode=np.array([t.episode for t in steps], dtype=np.int64),
            )
        logger.info("saved %d replay steps to %s", len(steps), path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ReplayBuffer":
        with np.load(Path(path)) as archive:
            version = int(archive["version"])
            if version != REPLAY_FORMAT_VERSION:
                raise SchemaError(f"{path}: replay format {version}, expected {REPLAY_FORMAT_VERSION}")
            data = {key: archive[key] for key in archive.files}
        buffer = cls()
        discrete = bool(data["discrete"])
        for k in range(len(data["reward"])):
            action = int(data["action"][k]) if discrete else data["action"][k].copy()
            buffer.push(
                EnvStepTransition(
                    obs=data["obs"][k].copy(),
                    action=action,
                    reward=float(data["reward"][k]),
                    next_obs=data["next_obs"][k].copy(),
                    terminal=bool(data["terminal"][k]),
                    truncated=bool(data["truncated"][k]),
                    env_step=int(data["env_step"][k]),
                    decision_aligned=bool(data["decision_aligned"][k]),
                    episode=int(data["rollout_episode"][k]),
                )
            )
        return buffer

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator[EnvStepTransition]:
        for episode in self._episodes:
            yield from episode

    def __getitem__(self, episode: int) -> tuple[EnvStepTransition, ...]:
        return tuple(self._episodes[episode])

    def __repr__(self) -> str:
        return f"ReplayBuffer(steps={self._size}, episodes={len(self._episodes)}, open={self._open})"


def valid_start_indices(
    buffer: ReplayBuffer, repeat: int, mode: SampleMode | str
) -> list[tuple[int, int]]:
    """
    All ``(episode, index)`` where a window of ``repeat`` steps can start.

    Examples:
        >>> from pseudo_action.qol import make_episode
        >>> buffer = ReplayBuffer()
        >>> for t in make_episode(9, repeat=4):
        ...     buffer.push(t)
        >>> [i for _, i in valid_start_indices(buffer, 4, "pseudo")]
        [0, 1, 2, 3, 4, 5]
        >>> [i for _, i in valid_start_indices(buffer, 4, "canonical")]
        [0, 4]
        >>> short = ReplayBuffer()
        >>> for t in make_episode(3, repeat=4):
        ...     short.push(t)
        >>> valid_start_indices(short, 4, "pseudo"), valid_start_indices(short, 4, "canonical")
        ([], [])
    """
    return list(buffer.window_starts(repeat, mode))


def assemble_batch(
    buffer: ReplayBuffer,
    starts: Sequence[tuple[int, int]],
    repeat: int,
    mode: SampleMode | str,
    gamma: float = GAMMA_ENV,
) -> PseudoBatch:
    """Build batch rows for the given window starts."""
    states, next_states, rewards, masks, canonical = [], [], [], [], []
    actions: list[RealMatrix] = []
    windows: list[list[int]] = []
    discrete = None
    for episode, start in starts:
        window = buffer.window(episode, start, repeat)
        if len(window) != repeat:
            raise InsufficientDataError(f"episode {episode} has no full window at {start}")
        if discrete is None:
            discrete = isinstance(window[0].action, (int, np.integer))
        states.append(window[0].obs)
        next_states.append(window[-1].next_obs)
        rewards.append([t.reward for t in window])
        masks.append(0.0 if window[-1].terminal else 1.0)
        canonical.append(window[0].decision_aligned)
        if discrete:
            windows.append([int(t.action) for t in window])
        else:
            actions.append(pseudo_action_continuous([t.action for t in window]))
    step_rewards = np.array(rewards, dtype=np.float64)
    return PseudoBatch(
        states=np.stack(states),
        actions=None if discrete else np.stack(actions),
        action_windows=np.array(windows, dtype=np.int64) if discrete else None,
        step_rewards=step_rewards,
        reward_sum=step_rewards.sum(axis=1, keepdims=True),
        next_states=np.stack(next_states),
        bootstrap_mask=np.array(masks, dtype=np.float64).reshape(-1, 1),
        effective_discount=gamma**repeat,
        is_canonical=np.array(canonical, dtype=bool),
        mode=SampleMode(mode),
        repeat=repeat,
        starts=tuple(starts),
    )


def sample_batch(
    buffer: ReplayBuffer,
    n: int,
    repeat: int,
    mode: SampleMode | str,
    rng: np.random.Generator,
    gamma: float = GAMMA_ENV,
    canonical_weight: float = 1.0,
) -> PseudoBatch:
    """
    Draw ``n`` windows uniformly, with replacement, from the valid starts.

    With ``canonical_weight`` w != 1 (pseudo mode only) a canonical window is
    w times as likely as a window starting between decision points.

    Examples:
        >>> import numpy as np
        >>> from pseudo_action.qol import make_episode
        >>> buffer = ReplayBuffer()
        >>> for t in make_episode(8, repeat=4, reward=0.25):
        ...     buffer.push(t)
        >>> batch = sample_batch(buffer, 16, 4, "pseudo", np.random.default_rng(0))
        >>> sorted(set(batch.reward_sum.ravel().tolist()))
        [1.0]
        >>> round(sample_batch(buffer, 1, 4, "pseudo", np.random.default_rng(0), gamma=0.99**0.25)
        ...       .effective_discount, 12)
        0.99
        >>> sample_batch(ReplayBuffer(), 4, 4, "pseudo", np.random.default_rng(0))
        Traceback (most recent call last):
        ...
        pseudo_action.errors.InsufficientDataError: no pseudo window of length 4 among 0 stored steps
    """
    if n < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {n}")
    mode = SampleMode(mode)
    starts = buffer.window_starts(repeat, mode)
    if not starts:
        raise InsufficientDataError(
            f"no {mode} window of length {repeat} among {len(buffer)} stored steps"
        )
    if canonical_weight == 1.0 or mode == SampleMode.Canonical:
        picks = rng.integers(0, len(starts), size=n)
        chosen = [starts[i] for i in picks]
    else:
        chosen = _weighted_starts(buffer, n, repeat, rng, canonical_weight)
    return assemble_batch(buffer, chosen, repeat, mode, gamma)


def _weighted_starts(
    buffer: ReplayBuffer,
    n: int,
    repeat: int,
    rng: np.random.Generator,
    canonical_weight: float,
) -> list[tuple[int, int]]:
    if canonical_weight <= 0:
        raise ConfigurationError(f"canonical weight must be positive, got {canonical_weight}")
    canonical = buffer.window_starts(repeat, SampleMode.Canonical)
    between = buffer._starts(repeat, _BETWEEN)
    weight = canonical_weight * len(canonical)
    p_canonical = weight / (weight + len(between))
    take_canonical = rng.random(n) < p_canonical
    canonical_picks = rng.integers(0, max(len(canonical), 1), size=n)
    between_picks = rng.integers(0, max(len(between), 1), size=n)
    return [
        canonical[c] if flag else between[b]
        for flag, c, b in zip(take_canonical, canonical_picks, between_picks)
    ]
