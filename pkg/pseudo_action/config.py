"""
Run configuration: defaults, flat ``key = value`` files and overrides.

Precedence is defaults < config file < overrides. Learning rate and batch size
default per algorithm; every other default is shared.
"""

import dataclasses
import types
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Union, get_args, get_origin, get_type_hints

from dotenv import dotenv_values

from .consts import (
    ACTOR_UPDATE_FREQ,
    DESK_ENV_STEPS,
    DQN_BATCH_SIZE,
    DQN_LEARNING_RATE,
    EMBEDDING_DIM,
    EVAL_EPISODES,
    EVAL_INTERVAL,
    FRAME_STACK,
    GAMMA_ENV,
    HIDDEN_DIM,
    MIN_REPLAY,
    N_LAYERS,
    SAC_BATCH_SIZE,
    SAC_LEARNING_RATE,
    TAU,
    UPDATE_EVERY,
)
from .errors import ConfigurationError
from .modes import Algo, RunMode

ENV_NAMES = ("pendulum", "pushbar", "integrator")

_ALGO_DEFAULTS = {
    Algo.Sac: {"learning_rate": SAC_LEARNING_RATE, "batch_size": SAC_BATCH_SIZE},
    Algo.Dqn: {"learning_rate": DQN_LEARNING_RATE, "batch_size": DQN_BATCH_SIZE},
}
_DEFAULT_ENV = {Algo.Sac: "pendulum", Algo.Dqn: "pushbar"}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    """
    Everything one training run depends on.

    ``learning_rate``, ``batch_size`` and ``env`` left at ``None`` are filled
    in from the algorithm.

    Examples:
        >>> config = RunConfig(algo="dqn")
        >>> config.env, config.learning_rate, config.batch_size, config.mode
        ('pushbar', 0.0003, 64, 'baseline')
        >>> RunConfig(repeat=0)
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: repeat must be >= 1, got 0
    """

    algo: Algo = Algo.Sac
    env: str | None = None
    mode: RunMode = RunMode.Baseline
    repeat: int = 4
    total_steps: int = DESK_ENV_STEPS
    seed: int = 0
    frame_stack: int = FRAME_STACK
    gamma: float = GAMMA_ENV
    learning_rate: float | None = None
    batch_size: int | None = None
    tau: float = TAU
    actor_update_freq: int = ACTOR_UPDATE_FREQ
    min_replay: int = MIN_REPLAY
    update_every: int = UPDATE_EVERY
    hidden_dim: int = HIDDEN_DIM
    n_layers: int = N_LAYERS
    embedding_dim: int = EMBEDDING_DIM
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.2
    reward_clip: bool = True
    twin_q: bool = False
    canonical_weight: float = 1.0
    max_episode_steps: int | None = None
    eval_interval: int = EVAL_INTERVAL
    eval_episodes: int = EVAL_EPISODES
    out: str = field(default="runs", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "algo", _coerce_enum(Algo, "algo", self.algo))
        object.__setattr__(self, "mode", _coerce_enum(RunMode, "mode", self.mode))
        if self.env is None:
            object.__setattr__(self, "env", _DEFAULT_ENV[self.algo])
        for key, value in _ALGO_DEFAULTS[self.algo].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        self._validate()

    def _validate(self) -> None:
        if self.env not in ENV_NAMES:
            raise ConfigurationError(f"env must be one of {', '.join(ENV_NAMES)}; got {self.env!r}")
        at_least_one = (
            "repeat", "total_steps", "frame_stack", "batch_size", "actor_update_freq",
            "update_every", "hidden_dim", "n_layers", "embedding_dim", "eval_interval",
            "eval_episodes",
        )
        for key in at_least_one:
            value = getattr(self, key)
            if value < 1:
                raise ConfigurationError(f"{key} must be >= 1, got {value}")
        if self.n_layers < 2:
            raise ConfigurationError(f"n_layers must be >= 2, got {self.n_layers}")
        if self.seed < 0 or self.min_replay < 0:
            raise ConfigurationError(f"seed and min_replay must be >= 0, got {self.seed}, {self.min_replay}")
        if self.max_episode_steps is not None and self.max_episode_steps < 1:
            raise ConfigurationError(f"max_episode_steps must be >= 1, got {self.max_episode_steps}")
        for key in ("gamma", "tau", "epsilon_start", "epsilon_end", "epsilon_decay_fraction"):
            value = getattr(self, key)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{key} must lie in [0, 1], got {value}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.canonical_weight > 0:
            raise ConfigurationError(f"canonical_weight must be > 0, got {self.canonical_weight}")
        discrete_env = self.env == "pushbar"
        if discrete_env != (self.algo == Algo.Dqn):
            raise ConfigurationError(f"algo {self.algo} cannot drive env {self.env!r}")

    @property
    def run_name(self) -> str:
        """
        Examples:
            >>> RunConfig(mode="pseudo", repeat=8, seed=3).run_name
            'pendulum-sac-pseudo-T8-s3'
        """
        return f"{self.env}-{self.algo}-{self.mode}-T{self.repeat}-s{self.seed}"

    def replace(self, **changes: Any) -> "RunConfig":
        """
        Copy with ``changes`` applied, coerced like file values.

        Examples:
            >>> RunConfig().replace(mode="pseudo", repeat="2").run_name
            'pendulum-sac-pseudo-T2-s0'
        """
        hints = get_type_hints(RunConfig)
        for key in changes:
            if key not in hints:
                raise ConfigurationError(f"unknown config key {key!r}")
        coerced = {key: _coerce(key, hints[key], value) for key, value in changes.items()}
        return dataclasses.replace(self, **coerced)

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def to_env_text(self) -> str:
        """
        The resolved config as ``key = value`` lines that :func:`parse_config`
        reads back.

        Examples:
            >>> text = RunConfig(algo="dqn", seed=2).to_env_text()
            >>> text.splitlines()[:3]
            ['algo = dqn', 'env = pushbar', 'mode = baseline']
        """
        lines = []
        for key, value in self.as_dict().items():
            shown = "" if value is None else repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{key} = {shown}")
        return "\n".join(lines) + "\n"


def config_diff(first: RunConfig, second: RunConfig) -> list[str]:
    """
    Keys whose values differ, output directory excluded.

    Examples:
        >>> config_diff(RunConfig(mode="baseline"), RunConfig(mode="pseudo", out="elsewhere"))
        ['mode']
    """
    return [
        f.name
        for f in dataclasses.fields(RunConfig)
        if f.compare and getattr(first, f.name) != getattr(second, f.name)
    ]


def _coerce_enum(enum_type, key: str, value):
    try:
        return enum_type(str(value).strip().lower())
    except ValueError:
        choices = ", ".join(m.value for m in enum_type)
        raise ConfigurationError(f"{key} must be one of {choices}; got {value!r}") from None


def _coerce(key: str, annotation, raw: Any) -> Any:
    """Turn a config-file string (or an already typed value) into ``annotation``."""
    optional = False
    if get_origin(annotation) in (Union, types.UnionType):
        members = [a for a in get_args(annotation) if a is not type(None)]
        optional = len(members) < len(get_args(annotation))
        (annotation,) = members
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        if optional:
            return None
        raise ConfigurationError(f"{key} needs a value")
    if annotation in (RunMode, Algo):
        return _coerce_enum(annotation, key, raw)
    if annotation is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in _TRUE | _FALSE:
            return text in _TRUE
        raise ConfigurationError(f"{key} must be true or false, got {raw!r}")
    try:
        if annotation is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(str(raw).strip()) if isinstance(raw, str) else int(raw)
        if annotation is float:
            return float(raw)
        return str(raw).strip()
    except ValueError:
        raise ConfigurationError(f"{key} must be {annotation.__name__}, got {raw!r}") from None


def parse_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """
    Build a :class:`RunConfig` from defaults, an optional file and overrides.

    Overrides whose value is ``None`` are ignored, so unset command-line
    flags fall through.

    Examples:
        >>> parse_config(overrides={"algo": "sac"}).learning_rate
        0.001
        >>> parse_config(overrides={"algo": "dqn", "repeat": "8"}).repeat
        8
        >>> parse_config(overrides={"repeats": 4})
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: unknown config key 'repeats'
    """
    raw: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} does not exist")
        raw.update(dotenv_values(path))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    hints = get_type_hints(RunConfig)
    values = {}
    for key, value in raw.items():
        if key not in hints:
            raise ConfigurationError(f"unknown config key {key!r}")
        values[key] = _coerce(key, hints[key], value)
    return RunConfig(**values)
