"""
Dense-network machinery shared by every agent: forward and backward passes
through small ReLU MLPs, Adam, Polyak averaging, the tanh-squashed Gaussian
policy head and a central-difference gradient checker.

All arithmetic is float64. Parameters are immutable value objects; every
update returns a new object.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Protocol, Sequence, TypeVar

import numpy as np

from .consts import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    HALF_LOG_2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    TANH_LOG_EPS,
    RealMatrix,
)
from .errors import ConfigurationError, InternalError, NonFiniteError
from .modes import Activation

# largest |action| the squashing head emits; tanh rounds to exactly 1.0 past |u| ~ 19
ACTION_LIMIT = 1.0 - 1e-12


class ParameterSet(Protocol):
    """Anything Adam, Polyak averaging and the gradient checker can walk."""

    def arrays(self) -> list[RealMatrix]: ...

    def array_names(self) -> list[str]: ...

    def with_arrays(self, arrays: Sequence[RealMatrix]) -> "ParameterSet": ...


P = TypeVar("P", bound=ParameterSet)


def as_matrix(values) -> RealMatrix:
    """
    Coerce scalars, vectors or matrices to a float64 row-major matrix.

    Examples:
        >>> as_matrix([1, 2]).shape
        (1, 2)
        >>> as_matrix(3.0).tolist()
        [[3.0]]
    """
    return np.atleast_2d(np.asarray(values, dtype=np.float64))


def zeros_like(params: P) -> P:
    return params.with_arrays([np.zeros_like(a) for a in params.arrays()])


def copy_params(params: P) -> P:
    return params.with_arrays([a.copy() for a in params.arrays()])


def global_norm(params: ParameterSet) -> float:
    """
    Euclidean norm over every entry of every array.

    Examples:
        >>> global_norm(ScalarParam(as_matrix(-3.0)))
        3.0
    """
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in params.arrays())))


@dataclass(frozen=True, eq=False)
class Layer:
    """One fully connected layer: ``activation(x @ weight + bias)``."""

    weight: RealMatrix
    bias: RealMatrix
    activation: Activation = Activation.Relu

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True, eq=False)
class MlpParams:
    """
    Parameters of a dense network.

    Attributes:
        layers: Layers in evaluation order. Layer ``k`` output width must equal
            layer ``k+1`` input width.
        head_dim: When set, the final output of width ``2 * head_dim`` is read
            as ``(mean, log_std)`` by :meth:`split_heads`.

    Examples:
        >>> import numpy as np
        >>> net = MlpParams((Layer(np.eye(2), np.zeros((1, 2)), Activation.Identity),))
        >>> net.in_dim, net.out_dim, len(net.arrays())
        (2, 2, 2)
        >>> net.array_names()
        ['layer 0 weight', 'layer 0 bias']
        >>> MlpParams((Layer(np.eye(2), np.zeros((1, 2))), Layer(np.eye(3), np.zeros((1, 3)))))
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: layer 1 expects input dim 3 but layer 0 outputs 2
    """

    layers: tuple[Layer, ...]
    head_dim: int | None = None

    def __post_init__(self) -> None:
        if not self.layers:
            raise ConfigurationError("an MLP needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.bias.shape != (1, layer.out_dim):
                raise ConfigurationError(
                    f"layer {k} bias has shape {layer.bias.shape}, expected (1, {layer.out_dim})"
                )
            if k and self.layers[k - 1].out_dim != layer.in_dim:
                raise ConfigurationError(
                    f"layer {k} expects input dim {layer.in_dim} "
                    f"but layer {k - 1} outputs {self.layers[k - 1].out_dim}"
                )
        if self.head_dim is not None and self.out_dim != 2 * self.head_dim:
            raise ConfigurationError(
                f"policy heads need output dim {2 * self.head_dim}, got {self.out_dim}"
            )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def arrays(self) -> list[RealMatrix]:
        out: list[RealMatrix] = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def array_names(self) -> list[str]:
        names: list[str] = []
        for k in range(len(self.layers)):
            names.extend((f"layer {k} weight", f"layer {k} bias"))
        return names

    def with_arrays(self, arrays: Sequence[RealMatrix]) -> "MlpParams":
        if len(arrays) != 2 * len(self.layers):
            raise ConfigurationError(
                f"expected {2 * len(self.layers)} arrays, got {len(arrays)}"
            )
        layers = tuple(
            Layer(arrays[2 * k], arrays[2 * k + 1], layer.activation)
            for k, layer in enumerate(self.layers)
        )
        return MlpParams(layers, self.head_dim)

    def split_heads(self, output: RealMatrix) -> tuple[RealMatrix, RealMatrix]:
        """Split a policy output into ``(mean, log_std)``."""
        if self.head_dim is None:
            raise ConfigurationError("network has no (mean, log_std) heads")
        return output[:, : self.head_dim], output[:, self.head_dim :]


@dataclass(frozen=True, eq=False)
class ScalarParam:
    """
    A single trainable real, stored as a 1x1 matrix (used for log alpha).

    Examples:
        >>> p = ScalarParam.of(0.5)
        >>> p.value
        0.5
        >>> p.with_arrays([p.arrays()[0] * 2]).value
        1.0
    """

    data: RealMatrix

    @classmethod
    def of(cls, value: float) -> "ScalarParam":
        return cls(as_matrix(float(value)))

    @property
    def value(self) -> float:
        return float(self.data[0, 0])

    def arrays(self) -> list[RealMatrix]:
        return [self.data]

    def array_names(self) -> list[str]:
        return ["scalar"]

    def with_arrays(self, arrays: Sequence[RealMatrix]) -> "ScalarParam":
        (data,) = arrays
        return ScalarParam(data)


@dataclass(frozen=True, eq=False)
class ParamGroup:
    """
    Several parameter sets viewed as one, e.g. a Q-network together with the
    action-embedding table it is trained with.
    """

    members: tuple

    def arrays(self) -> list[RealMatrix]:
        return [a for member in self.members for a in member.arrays()]

    def array_names(self) -> list[str]:
        return [
            f"member {i} {name}"
            for i, member in enumerate(self.members)
            for name in member.array_names()
        ]

    def with_arrays(self, arrays: Sequence[RealMatrix]) -> "ParamGroup":
        out, offset = [], 0
        for member in self.members:
            count = len(member.arrays())
            out.append(member.with_arrays(arrays[offset : offset + count]))
            offset += count
        if offset != len(arrays):
            raise ConfigurationError(f"expected {offset} arrays, got {len(arrays)}")
        return ParamGroup(tuple(out))


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    head_dim: int | None = None,
) -> MlpParams:
    """
    Create an MLP with ReLU hidden layers and a linear output layer.

    Weights are uniform in ``±1/sqrt(fan_in)``, biases start at zero.

    Args:
        sizes: Widths ``[in, hidden..., out]``.
        rng: Generator for the weights.
        head_dim: Marks the output as ``(mean, log_std)`` heads.

    Examples:
        >>> import numpy as np
        >>> net = init_mlp([3, 256, 256, 1], np.random.default_rng(0))
        >>> [layer.weight.shape for layer in net.layers]
        [(3, 256), (256, 256), (256, 1)]
        >>> [str(layer.activation) for layer in net.layers]
        ['relu', 'relu', 'none']
        >>> bool(np.all(np.abs(net.layers[0].weight) <= 1 / np.sqrt(3)))
        True
    """
    if len(sizes) < 2:
        raise ConfigurationError(f"need at least input and output sizes, got {list(sizes)}")
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        activation = Activation.Identity if k == len(sizes) - 2 else Activation.Relu
        layers.append(Layer(weight, np.zeros((1, fan_out)), activation))
    return MlpParams(tuple(layers), head_dim)


def mlp_forward(params: MlpParams, inputs: RealMatrix) -> list[RealMatrix]:
    """
    Run the network and keep every activation.

    Args:
        params: Network parameters.
        inputs: Batch of row vectors, shape ``(batch, in_dim)``.

    Returns:
        list[RealMatrix]: ``[inputs, h1, ..., output]``; backward needs all of them.

    Examples:
        >>> import numpy as np
        >>> linear = MlpParams((Layer(np.eye(2), np.zeros((1, 2)), Activation.Identity),))
        >>> mlp_forward(linear, as_matrix([1.0, 2.0]))[-1].tolist()
        [[1.0, 2.0]]
        >>> relu = MlpParams((Layer(np.eye(2), np.zeros((1, 2)), Activation.Relu),))
        >>> mlp_forward(relu, as_matrix([-1.0, 2.0]))[-1].tolist()
        [[0.0, 2.0]]
        >>> mlp_forward(relu, as_matrix([1.0, 2.0, 3.0]))
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: layer 0 expects input dim 2, got 3
    """
    hidden = as_matrix(inputs)
    activations = [hidden]
    for k, layer in enumerate(params.layers):
        if hidden.shape[1] != layer.in_dim:
            raise ConfigurationError(
                f"layer {k} expects input dim {layer.in_dim}, got {hidden.shape[1]}"
            )
        hidden = hidden @ layer.weight + layer.bias
        if layer.activation == Activation.Relu:
            hidden = np.maximum(hidden, 0.0)
        activations.append(hidden)
    return activations


def mlp_backward(
    params: MlpParams,
    activations: Sequence[RealMatrix],
    upstream_grad: RealMatrix,
) -> tuple[MlpParams, RealMatrix]:
    """
    Backpropagate ``upstream_grad`` (d loss / d output) through the network.

    Returns:
        tuple[MlpParams, RealMatrix]: Gradients shaped like ``params`` and the
        gradient with respect to the network input.

    Examples:
        >>> import numpy as np
        >>> net = MlpParams((Layer(as_matrix([[2.0], [3.0]]), as_matrix(1.0), Activation.Identity),))
        >>> acts = mlp_forward(net, as_matrix([4.0, 5.0]))
        >>> grads, grad_input = mlp_backward(net, acts, as_matrix(1.0))
        >>> grads.layers[0].weight.ravel().tolist(), grads.layers[0].bias.tolist()
        ([4.0, 5.0], [[1.0]])
        >>> grad_input.tolist()
        [[2.0, 3.0]]
    """
    if len(activations) != len(params.layers) + 1:
        raise InternalError(
            f"got {len(activations)} activations for a {len(params.layers)}-layer network"
        )
    grad = as_matrix(upstream_grad)
    layer_grads: list[Layer] = []
    for k in reversed(range(len(params.layers))):
        layer = params.layers[k]
        output, layer_input = activations[k + 1], activations[k]
        if output.shape != grad.shape or layer_input.shape[1] != layer.in_dim:
            raise InternalError(f"activation {k + 1} does not belong to layer {k}")
        if layer.activation == Activation.Relu:
            grad = grad * (output > 0.0)
        layer_grads.append(
            Layer(layer_input.T @ grad, grad.sum(axis=0, keepdims=True), layer.activation)
        )
        grad = grad @ layer.weight.T
    return MlpParams(tuple(reversed(layer_grads)), params.head_dim), grad


def gradient_check(
    loss_and_grad: Callable,
    params: P,
    fd_step: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """
    Compare analytic gradients with central finite differences.

    Args:
        loss_and_grad: ``params -> (loss, grads)`` with ``grads`` shaped like
            ``params``. Must be deterministic (fixed batch and noise).
        params: Point at which to check.
        fd_step: Central-difference step.
        max_entries: Check at most this many randomly chosen entries per array.
        rng: Chooses the entries when ``max_entries`` is set.

    Returns:
        float: max over checked entries of
        ``|analytic - central| / max(|analytic|, |central|, 1e-8)``.

    Examples:
        >>> import numpy as np
        >>> x = as_matrix([[0.3], [-1.2]])
        >>> def quadratic(p):
        ...     w = p.data
        ...     return 0.5 * float(np.sum((w @ x) ** 2)), ScalarParam(w @ x @ x.T)
        >>> w = np.array([[0.5, -0.1], [0.7, 2.0]])
        >>> gradient_check(quadratic, ScalarParam(w)) < 1e-6
        True
        >>> gradient_check(lambda p: (4.0, zeros_like(p)), ScalarParam(w))
        0.0
    """
    loss, analytic = loss_and_grad(params)
    if not np.isfinite(loss):
        raise NonFiniteError(f"loss is not finite: {loss}")
    base = params.arrays()
    worst = 0.0
    for index, (array, grad) in enumerate(zip(base, analytic.arrays())):
        entries = np.arange(array.size)
        if max_entries is not None and array.size > max_entries:
            chooser = rng if rng is not None else np.random.default_rng(0)
            entries = np.sort(chooser.choice(array.size, size=max_entries, replace=False))
        for flat in entries:
            values = []
            for sign in (1.0, -1.0):
                shifted = array.copy()
                shifted.flat[flat] += sign * fd_step
                arrays = list(base)
                arrays[index] = shifted
                value, _ = loss_and_grad(params.with_arrays(arrays))
                if not np.isfinite(value):
                    raise NonFiniteError(f"loss is not finite at a perturbed point: {value}")
                values.append(value)
            central = (values[0] - values[1]) / (2.0 * fd_step)
            exact = float(grad.flat[flat])
            scale = max(abs(exact), abs(central), 1e-8)
            worst = max(worst, abs(exact - central) / scale)
    return worst


def directional_check(
    loss_and_grad: Callable,
    params: P,
    direction: Sequence[RealMatrix],
    fd_step: float = 1e-5,
) -> float:
    """
    Relative error between the analytic directional derivative ``<grad, v>``
    and ``(loss(p + h v) - loss(p - h v)) / 2h``.
    """
    _, grads = loss_and_grad(params)
    exact = sum(float(np.sum(g * v)) for g, v in zip(grads.arrays(), direction))
    base = params.arrays()
    plus, _ = loss_and_grad(params.with_arrays([a + fd_step * v for a, v in zip(base, direction)]))
    minus, _ = loss_and_grad(params.with_arrays([a - fd_step * v for a, v in zip(base, direction)]))
    central = (plus - minus) / (2.0 * fd_step)
    return abs(exact - central) / max(abs(exact), abs(central), 1e-8)


@dataclass(frozen=True, eq=False)
class AdamState:
    """
    Adam moment accumulators mirroring a parameter set.

    Examples:
        >>> state = AdamState.create(ScalarParam.of(0.0), learning_rate=0.001)
        >>> state.step, state.learning_rate, state.beta1, state.beta2
        (0, 0.001, 0.9, 0.999)
    """

    first: tuple[RealMatrix, ...]
    second: tuple[RealMatrix, ...]
    step: int
    learning_rate: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def create(cls, params: ParameterSet, learning_rate: float) -> "AdamState":
        if learning_rate <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {learning_rate}")
        zeros = tuple(np.zeros_like(a) for a in params.arrays())
        return cls(zeros, tuple(np.zeros_like(a) for a in zeros), 0, learning_rate)


def adam_step(params: P, grads: ParameterSet, state: AdamState) -> tuple[P, AdamState]:
    """
    One bias-corrected Adam update.

    Examples:
        >>> p = ScalarParam.of(1.0)
        >>> state = AdamState.create(p, learning_rate=0.001)
        >>> p1, s1 = adam_step(p, ScalarParam.of(0.25), state)
        >>> round(1.0 - p1.value, 9), s1.step
        (0.001, 1)
        >>> p2, s2 = adam_step(p, ScalarParam.of(0.0), state)
        >>> p2.value, s2.step
        (1.0, 1)
        >>> adam_step(p, ScalarParam.of(float("nan")), state)
        Traceback (most recent call last):
        ...
        pseudo_action.errors.NonFiniteError: non-finite gradient in scalar
    """
    values, grad_arrays = params.arrays(), grads.arrays()
    names = params.array_names()
    if len(values) != len(grad_arrays) or len(values) != len(state.first):
        raise ConfigurationError(
            f"{len(values)} parameter arrays, {len(grad_arrays)} gradients, "
            f"{len(state.first)} moments"
        )
    step = state.step + 1
    correction1 = 1.0 - state.beta1**step
    correction2 = 1.0 - state.beta2**step
    new_values, first, second = [], [], []
    for name, value, grad, m, v in zip(names, values, grad_arrays, state.first, state.second):
        if grad.shape != value.shape:
            raise ConfigurationError(f"gradient for {name} has shape {grad.shape}, expected {value.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient in {name}")
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        new_values.append(value - state.learning_rate * update)
        first.append(m)
        second.append(v)
    new_state = AdamState(
        tuple(first), tuple(second), step, state.learning_rate, state.beta1, state.beta2, state.eps
    )
    return params.with_arrays(new_values), new_state


def polyak_update(target: P, online: ParameterSet, tau: float) -> P:
    """
    Move ``target`` toward ``online``: ``(1 - tau) * target + tau * online``.

    Examples:
        >>> polyak_update(ScalarParam.of(0.0), ScalarParam.of(1.0), 0.005).value
        0.005
        >>> polyak_update(ScalarParam.of(3.0), ScalarParam.of(-2.0), 1.0).value
        -2.0
        >>> polyak_update(ScalarParam.of(3.0), ScalarParam.of(-2.0), 0.0).value
        3.0
    """
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError(f"tau must lie in [0, 1], got {tau}")
    target_arrays, online_arrays = target.arrays(), online.arrays()
    if len(target_arrays) != len(online_arrays) or any(
        t.shape != o.shape for t, o in zip(target_arrays, online_arrays)
    ):
        raise ConfigurationError("target and online parameters have different shapes")
    return target.with_arrays(
        [(1.0 - tau) * t + tau * o for t, o in zip(target_arrays, online_arrays)]
    )


@dataclass(frozen=True, eq=False)
class TanhGaussianSample:
    """
    A reparameterized draw from the squashed Gaussian policy head.

    Attributes:
        pre_squash: ``mean + std * noise``.
        action: ``tanh(pre_squash)``, strictly inside (-1, 1).
        log_prob: Column of per-row log densities of ``action``.
        noise: The standard-normal noise used.
        std: ``exp(clip(log_std))``.
        log_std_active: 1 where ``log_std`` was inside the clamp range, else 0.
    """

    pre_squash: RealMatrix
    action: RealMatrix
    log_prob: RealMatrix
    noise: RealMatrix
    std: RealMatrix
    log_std_active: RealMatrix


def tanh_gaussian_sample(
    mean: RealMatrix, log_std: RealMatrix, noise: RealMatrix
) -> TanhGaussianSample:
    """
    Squash ``mean + exp(log_std) * noise`` through tanh and score it.

    The log density applies the change of variables
    ``log N(u; mean, std) - sum log(1 - tanh(u)^2 + 1e-6)``.

    Examples:
        >>> import numpy as np
        >>> s = tanh_gaussian_sample(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))
        >>> s.action.tolist()
        [[0.0, 0.0]]
        >>> bool(abs(s.log_prob[0, 0] - 2 * (-0.5 * np.log(2 * np.pi))) < 1e-5)
        True
        >>> far = tanh_gaussian_sample(as_matrix(10.0), as_matrix(0.0), as_matrix(0.0))
        >>> bool(np.isfinite(far.log_prob).all()), bool(far.action[0, 0] < 1.0)
        (True, True)
    """
    mean, log_std, noise = as_matrix(mean), as_matrix(log_std), as_matrix(noise)
    if not (mean.shape == log_std.shape == noise.shape):
        raise ConfigurationError(
            f"mean {mean.shape}, log_std {log_std.shape} and noise {noise.shape} must match"
        )
    clipped = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    active = ((log_std >= LOG_STD_MIN) & (log_std <= LOG_STD_MAX)).astype(np.float64)
    std = np.exp(clipped)
    pre_squash = mean + std * noise
    action = np.clip(np.tanh(pre_squash), -ACTION_LIMIT, ACTION_LIMIT)
    log_prob = np.sum(
        -0.5 * noise * noise - clipped - HALF_LOG_2PI - np.log(1.0 - action * action + TANH_LOG_EPS),
        axis=1,
        keepdims=True,
    )
    return TanhGaussianSample(pre_squash, action, log_prob, noise, std, active)


def tanh_gaussian_backward(
    sample: TanhGaussianSample,
    grad_action: RealMatrix,
    grad_log_prob: RealMatrix,
) -> tuple[RealMatrix, RealMatrix]:
    """
    Chain d loss / d action and d loss / d log_prob back to the heads.

    Returns:
        tuple[RealMatrix, RealMatrix]: Gradients for ``mean`` and ``log_std``.
    """
    action = sample.action
    slope = 1.0 - action * action
    grad_pre = grad_action * slope + grad_log_prob * (2.0 * action * slope / (slope + TANH_LOG_EPS))
    grad_log_std = (grad_pre * sample.std * sample.noise - grad_log_prob) * sample.log_std_active
    return grad_pre, grad_log_std


class LossAndGrads(NamedTuple):
    """A scalar loss and one gradient set per trained parameter set."""

    loss: float
    grads: tuple
