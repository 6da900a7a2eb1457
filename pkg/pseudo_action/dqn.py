"""
Double DQN over learned action embeddings.

A discrete action id is looked up in an embedding table and concatenated to
the state; the Q network outputs one value per (state, embedding) pair. A
window of ``T`` action ids is represented by the mean of their embeddings, so
pseudo-actions live in the same space as single actions and the table is
trained jointly with the Q network.
"""

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .consts import (
    DQN_LEARNING_RATE,
    EMBEDDING_DIM,
    HIDDEN_DIM,
    N_LAYERS,
    IntArray,
    RealMatrix,
)
from .errors import ConfigurationError, ContractViolationError, InvalidActionError
from .nn import (
    AdamState,
    LossAndGrads,
    MlpParams,
    ParamGroup,
    adam_step,
    as_matrix,
    copy_params,
    global_norm,
    init_mlp,
    mlp_backward,
    mlp_forward,
    polyak_update,
)
from .replay import PseudoBatch


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """
    One learned row per action id.

    Examples:
        >>> import numpy as np
        >>> table = EmbeddingTable(np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]))
        >>> table.n_actions, table.dim
        (3, 2)
        >>> table.pseudo_embed([[0, 1]]).tolist()
        [[0.5, 0.5]]
        >>> table.pseudo_embed([[2, 2, 2, 2]]).tolist()
        [[2.0, 2.0]]
        >>> table.pseudo_embed([[0, 3]])
        Traceback (most recent call last):
        ...
        pseudo_action.errors.InvalidActionError: action id 3 outside 0..2
    """

    rows: RealMatrix

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[0] < 1:
            raise ConfigurationError(f"embedding rows must be (n_actions, dim), got {self.rows.shape}")

    @classmethod
    def create(cls, n_actions: int, dim: int, rng: np.random.Generator) -> "EmbeddingTable":
        """Rows uniform in ``±1/sqrt(dim)``."""
        if n_actions < 1 or dim < 1:
            raise ConfigurationError(f"need n_actions >= 1 and dim >= 1, got {n_actions}, {dim}")
        bound = 1.0 / np.sqrt(dim)
        return cls(rng.uniform(-bound, bound, size=(n_actions, dim)))

    @property
    def n_actions(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def arrays(self) -> list[RealMatrix]:
        return [self.rows]

    def array_names(self) -> list[str]:
        return ["embedding rows"]

    def with_arrays(self, arrays: Sequence[RealMatrix]) -> "EmbeddingTable":
        (rows,) = arrays
        return EmbeddingTable(rows)

    def _check_ids(self, ids: IntArray) -> IntArray:
        ids = np.asarray(ids, dtype=np.int64)
        bad = ids[(ids < 0) | (ids >= self.n_actions)]
        if bad.size:
            raise InvalidActionError(f"action id {int(bad[0])} outside 0..{self.n_actions - 1}")
        return ids

    def lookup(self, ids: Sequence[int]) -> RealMatrix:
        return self.rows[self._check_ids(ids)]

    def pseudo_embed(self, windows: Sequence[Sequence[int]]) -> RealMatrix:
        """
        Mean embedding of each ``(N, T)`` window, ``(N, dim)``.

        Computed as ``e_0 + mean(e_t - e_0)`` so a window of one repeated id
        returns that id's row bit for bit.
        """
        windows = np.atleast_2d(self._check_ids(windows))
        looked_up = self.rows[windows]
        first = looked_up[:, :1, :]
        return first[:, 0, :] + (looked_up - first).mean(axis=1)

    def pseudo_embed_backward(
        self, windows: Sequence[Sequence[int]], grad_embedding: RealMatrix
    ) -> "EmbeddingTable":
        """Scatter ``grad_embedding / T`` into every row a window used."""
        windows = np.atleast_2d(self._check_ids(windows))
        repeat = windows.shape[1]
        grads = np.zeros_like(self.rows)
        share = np.repeat(as_matrix(grad_embedding) / repeat, repeat, axis=0)
        np.add.at(grads, windows.reshape(-1), share)
        return EmbeddingTable(grads)


@dataclass(frozen=True)
class EpsilonSchedule:
    """
    Linear decay of the exploration rate over the first part of a run.

    Examples:
        >>> schedule = EpsilonSchedule(total_steps=1000)
        >>> schedule.value(0), schedule.value(100), schedule.value(200), schedule.value(900)
        (1.0, 0.525, 0.05, 0.05)
    """

    total_steps: int
    start: float = 1.0
    end: float = 0.05
    decay_fraction: float = 0.2

    def value(self, env_step: int) -> float:
        horizon = max(1.0, self.decay_fraction * self.total_steps)
        progress = min(1.0, env_step / horizon)
        return (1.0 - progress) * self.start + progress * self.end


@dataclass(frozen=True, eq=False)
class DqnAgent:
    """
    Online and target networks, embedding tables and optimizer state.

    The Q network and the embedding table share one Adam state through a
    :class:`~pseudo_action.nn.ParamGroup`.

    Examples:
        >>> import numpy as np
        >>> agent = DqnAgent.create(8, 3, np.random.default_rng(0), hidden_dim=16)
        >>> agent.embed.rows.shape, agent.q_params.in_dim
        ((3, 8), 16)
        >>> agent.act(np.zeros(8), explore=False, rng=np.random.default_rng(0)) in (0, 1, 2)
        True
    """

    embed: EmbeddingTable
    q_params: MlpParams
    embed_target: EmbeddingTable
    q_target: MlpParams
    opt: AdamState
    epsilon: float = 1.0
    reward_clip: bool = True
    q_updates: int = 0

    @classmethod
    def create(
        cls,
        state_dim: int,
        n_actions: int,
        rng: np.random.Generator,
        embedding_dim: int = EMBEDDING_DIM,
        hidden_dim: int = HIDDEN_DIM,
        n_layers: int = N_LAYERS,
        learning_rate: float = DQN_LEARNING_RATE,
        reward_clip: bool = True,
        epsilon: float = 1.0,
    ) -> "DqnAgent":
        hidden = [hidden_dim] * (n_layers - 1)
        q_params = init_mlp([state_dim + embedding_dim, *hidden, 1], rng)
        embed = EmbeddingTable.create(n_actions, embedding_dim, rng)
        return cls(
            embed=embed,
            q_params=q_params,
            embed_target=copy_params(embed),
            q_target=copy_params(q_params),
            opt=AdamState.create(ParamGroup((q_params, embed)), learning_rate),
            epsilon=epsilon,
            reward_clip=reward_clip,
        )

    @property
    def n_actions(self) -> int:
        return self.embed.n_actions

    @property
    def online(self) -> ParamGroup:
        return ParamGroup((self.q_params, self.embed))

    def with_online(self, group: ParamGroup) -> "DqnAgent":
        q_params, embed = group.members
        return replace(self, q_params=q_params, embed=embed)

    def with_epsilon(self, epsilon: float) -> "DqnAgent":
        if not 0.0 <= epsilon <= 1.0:
            raise ConfigurationError(f"epsilon must lie in [0, 1], got {epsilon}")
        return replace(self, epsilon=epsilon)

    def act(self, state: RealMatrix, explore: bool, rng: np.random.Generator) -> int:
        """Epsilon-greedy when exploring; greedy ties go to the lowest id."""
        if explore and rng.random() < self.epsilon:
            return int(rng.integers(self.n_actions))
        values = all_action_values(self.q_params, self.embed, as_matrix(state))
        return int(np.argmax(values[0]))

    def critic_update(
        self, batch: PseudoBatch, rng: np.random.Generator | None = None
    ) -> tuple["DqnAgent", dict[str, float]]:
        loss, grads = dqn_loss_and_grads(batch, self)
        group, opt = adam_step(self.online, ParamGroup(grads), self.opt)
        updated = replace(self.with_online(group), opt=opt, q_updates=self.q_updates + 1)
        return updated, {"q_loss": loss, "grad_norm": global_norm(ParamGroup(grads))}

    def soft_update(self, tau: float) -> "DqnAgent":
        return replace(
            self,
            q_target=polyak_update(self.q_target, self.q_params, tau),
            embed_target=polyak_update(self.embed_target, self.embed, tau),
        )


def _q_outputs(q_params: MlpParams, states: RealMatrix, embeddings: RealMatrix) -> RealMatrix:
    states, embeddings = as_matrix(states), as_matrix(embeddings)
    expected = q_params.in_dim - states.shape[1]
    if embeddings.shape[1] != expected:
        raise ConfigurationError(
            f"embedding dim {embeddings.shape[1]} does not match the Q network ({expected})"
        )
    return mlp_forward(q_params, np.hstack([states, embeddings]))[-1]


def dqn_q_value(agent: DqnAgent, state: RealMatrix, embedding: RealMatrix) -> float:
    """
    Q value of one state paired with one (possibly averaged) embedding.

    Examples:
        >>> import numpy as np
        >>> agent = DqnAgent.create(4, 3, np.random.default_rng(0), hidden_dim=8)
        >>> isinstance(dqn_q_value(agent, np.zeros(4), agent.embed.rows[1]), float)
        True
        >>> dqn_q_value(agent, np.zeros(4), np.zeros(3))
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: embedding dim 3 does not match the Q network (8)
    """
    return float(_q_outputs(agent.q_params, state, embedding)[0, 0])


def embedding_pseudo_action(agent: DqnAgent, action_ids: Sequence[int]) -> RealMatrix:
    """
    Mean of the online embeddings of ``action_ids``.

    Examples:
        >>> import numpy as np
        >>> agent = DqnAgent.create(4, 3, np.random.default_rng(0), hidden_dim=8)
        >>> bool(np.array_equal(embedding_pseudo_action(agent, [2, 2, 2]), agent.embed.rows[2]))
        True
    """
    if len(action_ids) == 0:
        raise ConfigurationError("a pseudo-action needs at least one action")
    return agent.embed.pseudo_embed([list(action_ids)])[0]


def all_action_values(
    q_params: MlpParams, table: EmbeddingTable, states: RealMatrix
) -> RealMatrix:
    """``(N, n_actions)`` Q values by enumerating every table row."""
    states = as_matrix(states)
    n, n_actions = states.shape[0], table.n_actions
    paired_states = np.repeat(states, n_actions, axis=0)
    paired_rows = np.tile(table.rows, (n, 1))
    return _q_outputs(q_params, paired_states, paired_rows).reshape(n, n_actions)


def _require_discrete(batch: PseudoBatch) -> IntArray:
    if batch.action_windows is None:
        raise ContractViolationError("DQN needs a batch of discrete action windows")
    return batch.action_windows


def window_rewards(batch: PseudoBatch, clip: bool) -> RealMatrix:
    """Per-row reward sum, each env-step reward clipped to [-1, 1] first when ``clip``."""
    if not clip:
        return batch.reward_sum
    return np.clip(batch.step_rewards, -1.0, 1.0).sum(axis=1, keepdims=True)


def double_dqn_target(batch: PseudoBatch, agent: DqnAgent) -> RealMatrix:
    """
    ``r + mask * gamma^T * Q_target(s', e_target(a*))`` where ``a*`` maximizes
    the online Q at ``s'``.
    """
    _require_discrete(batch)
    online = all_action_values(agent.q_params, agent.embed, batch.next_states)
    best = np.argmax(online, axis=1)
    target = all_action_values(agent.q_target, agent.embed_target, batch.next_states)
    bootstrap = target[np.arange(len(batch)), best].reshape(-1, 1)
    rewards = window_rewards(batch, agent.reward_clip)
    return rewards + batch.bootstrap_mask * batch.effective_discount * bootstrap


def dqn_loss_and_grads(batch: PseudoBatch, agent: DqnAgent) -> LossAndGrads:
    """
    Mean squared TD error against the (fixed) Double DQN target.

    Returns gradients for the Q network and for the embedding table; a row
    no window uses gets exactly zero gradient.
    """
    windows = _require_discrete(batch)
    target = double_dqn_target(batch, agent)
    embeddings = agent.embed.pseudo_embed(windows)
    inputs = np.hstack([batch.states, embeddings])
    activations = mlp_forward(agent.q_params, inputs)
    error = activations[-1] - target
    n, state_dim = len(batch), batch.states.shape[1]
    q_grads, grad_input = mlp_backward(agent.q_params, activations, 2.0 * error / n)
    table_grads = agent.embed.pseudo_embed_backward(windows, grad_input[:, state_dim:])
    return LossAndGrads(float(np.mean(error * error)), (q_grads, table_grads))
