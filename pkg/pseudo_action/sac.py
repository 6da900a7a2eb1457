"""
Soft actor-critic for continuous actions.

The critic is trained on whatever batch the sampler hands it (canonical or
pseudo windows, the pseudo-action standing in for the action); the policy and
the temperature only ever see canonical windows.
"""

from dataclasses import dataclass, replace

import numpy as np

from .consts import HIDDEN_DIM, N_LAYERS, SAC_LEARNING_RATE, RealMatrix
from .errors import ContractViolationError, NonFiniteError
from .modes import SampleMode
from .nn import (
    ACTION_LIMIT,
    AdamState,
    LossAndGrads,
    MlpParams,
    ScalarParam,
    TanhGaussianSample,
    adam_step,
    as_matrix,
    copy_params,
    global_norm,
    init_mlp,
    mlp_backward,
    mlp_forward,
    polyak_update,
    tanh_gaussian_backward,
    tanh_gaussian_sample,
)
from .replay import PseudoBatch

INITIAL_ALPHA = 0.1


@dataclass(frozen=True, eq=False)
class SacAgent:
    """
    Networks, temperature and optimizer state of a SAC learner.

    Actions reach the networks divided by ``action_scale`` so the critic and
    the policy both work in (-1, 1).

    Examples:
        >>> import numpy as np
        >>> agent = SacAgent.create(12, 1, 2.0, np.random.default_rng(0), hidden_dim=16)
        >>> agent.target_entropy, round(agent.alpha, 6), agent.twin
        (-1.0, 0.1, False)
        >>> [layer.weight.shape for layer in agent.policy_params.layers]
        [(12, 16), (16, 16), (16, 2)]
        >>> action = agent.act(np.zeros(12), explore=False, rng=np.random.default_rng(1))
        >>> action.shape, bool(abs(action[0]) < 2.0)
        ((1,), True)
    """

    q_params: MlpParams
    q_target: MlpParams
    policy_params: MlpParams
    log_alpha: ScalarParam
    target_entropy: float
    action_scale: float
    q_opt: AdamState
    policy_opt: AdamState
    alpha_opt: AdamState
    q2_params: MlpParams | None = None
    q2_target: MlpParams | None = None
    q2_opt: AdamState | None = None
    q_updates: int = 0

    @classmethod
    def create(
        cls,
        state_dim: int,
        action_dim: int,
        action_scale: float,
        rng: np.random.Generator,
        hidden_dim: int = HIDDEN_DIM,
        n_layers: int = N_LAYERS,
        learning_rate: float = SAC_LEARNING_RATE,
        twin_q: bool = False,
        initial_alpha: float = INITIAL_ALPHA,
    ) -> "SacAgent":
        hidden = [hidden_dim] * (n_layers - 1)
        q_params = init_mlp([state_dim + action_dim, *hidden, 1], rng)
        policy = init_mlp([state_dim, *hidden, 2 * action_dim], rng, head_dim=action_dim)
        log_alpha = ScalarParam.of(np.log(initial_alpha))
        q2_params = init_mlp([state_dim + action_dim, *hidden, 1], rng) if twin_q else None
        return cls(
            q_params=q_params,
            q_target=copy_params(q_params),
            policy_params=policy,
            log_alpha=log_alpha,
            target_entropy=-float(action_dim),
            action_scale=float(action_scale),
            q_opt=AdamState.create(q_params, learning_rate),
            policy_opt=AdamState.create(policy, learning_rate),
            alpha_opt=AdamState.create(log_alpha, learning_rate),
            q2_params=q2_params,
            q2_target=copy_params(q2_params) if twin_q else None,
            q2_opt=AdamState.create(q2_params, learning_rate) if twin_q else None,
        )

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.value))

    @property
    def twin(self) -> bool:
        return self.q2_params is not None

    @property
    def state_dim(self) -> int:
        return self.policy_params.in_dim

    @property
    def action_dim(self) -> int:
        return self.policy_params.head_dim or 0

    @property
    def epsilon(self) -> None:
        return None

    def critics(self) -> tuple[MlpParams, ...]:
        return (self.q_params,) if self.q2_params is None else (self.q_params, self.q2_params)

    def target_critics(self) -> tuple[MlpParams, ...]:
        return (self.q_target,) if self.q2_target is None else (self.q_target, self.q2_target)

    def act(self, state: RealMatrix, explore: bool, rng: np.random.Generator) -> RealMatrix:
        """Sampled action when exploring, ``tanh(mean)`` otherwise; env units."""
        output = mlp_forward(self.policy_params, as_matrix(state))[-1]
        mean, log_std = self.policy_params.split_heads(output)
        if explore:
            action = tanh_gaussian_sample(mean, log_std, rng.standard_normal(mean.shape)).action
        else:
            action = np.clip(np.tanh(mean), -ACTION_LIMIT, ACTION_LIMIT)
        if not np.all(np.isfinite(action)):
            raise NonFiniteError(f"policy produced a non-finite action: {action}")
        return self.action_scale * action[0]

    def critic_update(
        self, batch: PseudoBatch, rng: np.random.Generator
    ) -> tuple["SacAgent", dict[str, float]]:
        noise = rng.standard_normal((len(batch), self.action_dim))
        loss, grads = sac_q_loss_and_grads(batch, self, noise)
        q_params, q_opt = adam_step(self.q_params, grads[0], self.q_opt)
        updated = replace(self, q_params=q_params, q_opt=q_opt, q_updates=self.q_updates + 1)
        if self.twin:
            q2_params, q2_opt = adam_step(self.q2_params, grads[1], self.q2_opt)
            updated = replace(updated, q2_params=q2_params, q2_opt=q2_opt)
        grad_norm = float(np.sqrt(sum(global_norm(g) ** 2 for g in grads)))
        return updated, {"q_loss": loss, "grad_norm": grad_norm}

    def actor_update(
        self, batch: PseudoBatch, rng: np.random.Generator
    ) -> tuple["SacAgent", dict[str, float]]:
        noise = rng.standard_normal((len(batch), self.action_dim))
        policy_loss, (policy_grads,) = sac_policy_loss_and_grads(batch, self, noise)
        _, (alpha_grad,) = sac_alpha_loss_and_grad(batch, self, noise)
        policy, policy_opt = adam_step(self.policy_params, policy_grads, self.policy_opt)
        log_alpha, alpha_opt = adam_step(self.log_alpha, alpha_grad, self.alpha_opt)
        updated = replace(
            self,
            policy_params=policy,
            policy_opt=policy_opt,
            log_alpha=log_alpha,
            alpha_opt=alpha_opt,
        )
        return updated, {"policy_loss": policy_loss, "alpha": updated.alpha}

    def soft_update(self, tau: float) -> "SacAgent":
        updated = replace(self, q_target=polyak_update(self.q_target, self.q_params, tau))
        if self.twin:
            updated = replace(updated, q2_target=polyak_update(self.q2_target, self.q2_params, tau))
        return updated


def q_value(params: MlpParams, states: RealMatrix, actions: RealMatrix) -> RealMatrix:
    """Critic output for normalized actions, one row per state."""
    return mlp_forward(params, np.hstack([as_matrix(states), as_matrix(actions)]))[-1]


def policy_sample(
    agent: SacAgent, states: RealMatrix, noise: RealMatrix
) -> tuple[list[RealMatrix], TanhGaussianSample]:
    activations = mlp_forward(agent.policy_params, as_matrix(states))
    mean, log_std = agent.policy_params.split_heads(activations[-1])
    return activations, tanh_gaussian_sample(mean, log_std, noise)


def _require_continuous(batch: PseudoBatch) -> RealMatrix:
    if batch.actions is None:
        raise ContractViolationError("SAC needs a batch of continuous pseudo-actions")
    return batch.actions


def _require_canonical(batch: PseudoBatch, what: str) -> None:
    if batch.mode != SampleMode.Canonical:
        raise ContractViolationError(
            f"the {what} trains on canonical batches only, got a {batch.mode} batch"
        )


def sac_q_target(batch: PseudoBatch, agent: SacAgent, noise: RealMatrix) -> RealMatrix:
    """
    Soft TD target ``r + mask * gamma^T * (Q'(s', a') - alpha * log pi(a'|s'))``
    with ``a'`` drawn from the current policy using ``noise``.
    """
    _, sample = policy_sample(agent, batch.next_states, noise)
    next_q = q_value(agent.q_target, batch.next_states, sample.action)
    if agent.q2_target is not None:
        next_q = np.minimum(next_q, q_value(agent.q2_target, batch.next_states, sample.action))
    soft_value = next_q - agent.alpha * sample.log_prob
    return batch.reward_sum + batch.bootstrap_mask * batch.effective_discount * soft_value


def sac_q_loss_and_grads(batch: PseudoBatch, agent: SacAgent, noise: RealMatrix) -> LossAndGrads:
    """
    Mean squared TD error of each critic; the target is held fixed.

    Returns one gradient set per critic (two with ``twin_q``).
    """
    actions = _require_continuous(batch) / agent.action_scale
    target = sac_q_target(batch, agent, noise)
    inputs = np.hstack([batch.states, actions])
    n = len(batch)
    loss, grads = 0.0, []
    for params in agent.critics():
        activations = mlp_forward(params, inputs)
        error = activations[-1] - target
        loss += float(np.mean(error * error))
        critic_grads, _ = mlp_backward(params, activations, 2.0 * error / n)
        grads.append(critic_grads)
    return LossAndGrads(loss, tuple(grads))


def sac_policy_loss_and_grads(
    batch: PseudoBatch, agent: SacAgent, noise: RealMatrix
) -> LossAndGrads:
    """
    Reparameterized policy loss ``mean(alpha * log pi(a|s) - Q(s, a))`` on a
    canonical batch; the critic is held fixed.
    """
    _require_canonical(batch, "policy")
    policy_activations, sample = policy_sample(agent, batch.states, noise)
    inputs = np.hstack([batch.states, sample.action])
    n, state_dim = len(batch), batch.states.shape[1]
    critic_passes = [(params, mlp_forward(params, inputs)) for params in agent.critics()]
    values = np.hstack([acts[-1] for _, acts in critic_passes])
    chosen = np.argmin(values, axis=1)
    q = values[np.arange(n), chosen].reshape(-1, 1)
    alpha = agent.alpha
    loss = float(np.mean(alpha * sample.log_prob - q))

    grad_action = np.zeros_like(sample.action)
    for index, (params, activations) in enumerate(critic_passes):
        upstream = -(chosen == index).astype(np.float64).reshape(-1, 1) / n
        _, grad_input = mlp_backward(params, activations, upstream)
        grad_action += grad_input[:, state_dim:]
    grad_log_prob = np.full((n, 1), alpha / n)
    grad_mean, grad_log_std = tanh_gaussian_backward(sample, grad_action, grad_log_prob)
    policy_grads, _ = mlp_backward(
        agent.policy_params, policy_activations, np.hstack([grad_mean, grad_log_std])
    )
    return LossAndGrads(loss, (policy_grads,))


def sac_alpha_loss_and_grad(
    batch: PseudoBatch, agent: SacAgent, noise: RealMatrix
) -> LossAndGrads:
    """
    Temperature loss ``mean(-alpha * log pi - alpha * target_entropy)`` and its
    derivative with respect to ``log_alpha``.
    """
    _require_canonical(batch, "temperature")
    _, sample = policy_sample(agent, batch.states, noise)
    gap = float(np.mean(sample.log_prob + agent.target_entropy))
    loss = -agent.alpha * gap
    return LossAndGrads(loss, (ScalarParam.of(loss),))
