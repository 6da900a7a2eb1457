"""
Experiment orchestration: seeded runs, evaluation, metrics files and the
multi-run comparison.

A run writes into ``<out>/<run_name>/``:

- ``metrics.csv``: ``# schema=1`` then one row per evaluation point;
- ``timing.csv``: wall-clock seconds per evaluation point;
- ``config.env``: the resolved configuration;
- ``checkpoint.npz``: the final agent;
- ``plot.gp``: a gnuplot script for the learning curve.

``metrics.csv`` depends only on the configuration and seed, never on the
clock, so two runs of the same configuration produce identical files.
"""

import csv
import io
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from rich.table import Table

from .checkpoint import save_checkpoint
from .config import RunConfig, parse_config
from .consts import METRICS_SCHEMA
from .dqn import DqnAgent, EpsilonSchedule
from .envs import FrameStack, RepeatRollout
from .errors import ConfigurationError, SchemaError, TrainingDivergedError
from .log import get_logger
from .modes import Algo
from .qol import make_agent, make_env
from .replay import ReplayBuffer
from .sac import SacAgent
from .trainer import UpdateMetrics, train_step

logger = get_logger(__name__)

STREAM_NAMES = ("init", "env", "act", "sampler", "noise", "eval")
METRICS_COLUMNS = (
    "env_step",
    "episodes",
    "eval_return",
    "eval_return_std",
    "q_loss",
    "policy_loss",
    "alpha",
    "epsilon",
    "status",
)
GROUP_KEYS = ("algo", "repeat", "mode", "env")
FINAL_WINDOW = 0.1


@dataclass(frozen=True, eq=False)
class RngStreams:
    """
    Independent generators fanned out from one master seed.

    Each concern draws from its own stream, so e.g. evaluating more often
    leaves the training trajectory untouched.

    Examples:
        >>> a, b = RngStreams.from_seed(7), RngStreams.from_seed(7)
        >>> bool(a.sampler.integers(1000) == b.sampler.integers(1000))
        True
        >>> c = RngStreams.from_seed(7)
        >>> _ = c.eval.random(100)
        >>> bool(c.sampler.integers(1000) == RngStreams.from_seed(7).sampler.integers(1000))
        True
    """

    init: np.random.Generator
    env: np.random.Generator
    act: np.random.Generator
    sampler: np.random.Generator
    noise: np.random.Generator
    eval: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
        return cls(*(np.random.default_rng(child) for child in children))


@dataclass(frozen=True)
class MetricsRow:
    """One evaluation point. ``None`` marks a column that does not apply."""

    env_step: int
    episodes: int
    eval_return: float | None
    eval_return_std: float | None
    q_loss: float | None = None
    policy_loss: float | None = None
    alpha: float | None = None
    epsilon: float | None = None
    wall_seconds: float = 0.0
    status: str = "ok"

    def csv_fields(self) -> list[str]:
        return [_cell(getattr(self, column)) for column in METRICS_COLUMNS]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class EvalResult:
    mean: float
    std: float
    returns: tuple[float, ...]


def evaluate_policy(
    agent: SacAgent | DqnAgent,
    env: FrameStack,
    n_episodes: int,
    rng: np.random.Generator | int,
    repeat: int = 1,
) -> EvalResult:
    """
    Undiscounted returns of the deterministic policy (SAC mean action, DQN
    greedy), choosing an action every ``repeat`` steps.

    Examples:
        >>> import numpy as np
        >>> from pseudo_action.qol import make_env
        >>> from pseudo_action.dqn import DqnAgent
        >>> env = make_env("pushbar", frame_stack=1, max_episode_steps=20)
        >>> agent = DqnAgent.create(3, 3, np.random.default_rng(0), hidden_dim=8)
        >>> result = evaluate_policy(agent, env, 1, 5)
        >>> result.std, len(result.returns)
        (0.0, 1)
    """
    if n_episodes < 1:
        raise ConfigurationError(f"n_episodes must be >= 1, got {n_episodes}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    returns = []
    for _ in range(n_episodes):
        obs = env.reset(rng)
        total, step, action = 0.0, 0, None
        while True:
            if step % repeat == 0:
                action = agent.act(obs, explore=False, rng=rng)
            result = env.step(action)
            total += float(result.reward)
            step += 1
            if result.terminal or result.truncated:
                break
            obs = result.obs
        returns.append(total)
    values = np.array(returns)
    return EvalResult(float(values.mean()), float(values.std()), tuple(returns))


class _Actor:
    """Exploring action selector that always uses the latest agent."""

    def __init__(self, agent: SacAgent | DqnAgent, rng: np.random.Generator):
        self.agent = agent
        self.rng = rng

    def __call__(self, obs):
        return self.agent.act(obs, explore=True, rng=self.rng)


@dataclass(frozen=True, eq=False)
class RunResult:
    run_dir: Path
    metrics_path: Path
    checkpoint_path: Path
    rows: tuple[MetricsRow, ...]
    agent: SacAgent | DqnAgent


def _atomic_write(path: Path, text: str) -> None:
    temporary = path.with_name(path.name + ".tmp")
    temporary.write_text(text, encoding="utf-8")
    os.replace(temporary, path)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]], preamble: str = "") -> str:
    buffer = io.StringIO()
    buffer.write(preamble)
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_metrics(path: Path, rows: Sequence[MetricsRow]) -> None:
    text = _csv_text(
        METRICS_COLUMNS, (row.csv_fields() for row in rows), f"# schema={METRICS_SCHEMA}\n"
    )
    _atomic_write(path, text)


def write_timing(path: Path, rows: Sequence[MetricsRow]) -> None:
    text = _csv_text(
        ("env_step", "wall_seconds"), ([str(r.env_step), f"{r.wall_seconds:.3f}"] for r in rows)
    )
    _atomic_write(path, text)


def plot_script(run_name: str) -> str:
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set xlabel 'env step'\n"
        "set ylabel 'eval return'\n"
        f"set title '{run_name}'\n"
        "plot 'metrics.csv' using 1:3 with linespoints title 'eval return'\n"
    )


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def run_experiment(config: RunConfig) -> RunResult:
    """
    Train one agent for ``config.total_steps`` environment steps.

    Every ``eval_interval`` steps the deterministic policy is scored on a
    separate environment and a row is added to ``metrics.csv`` (the whole
    file is rewritten and swapped in atomically). Loss columns average the
    updates since the previous row.

    Raises:
        TrainingDivergedError: After writing a ``status=diverged`` row.
    """
    run_dir = Path(config.out) / config.run_name
    run_dir.mkdir(parents=True, exist_ok=True)
    metrics_path, timing_path = run_dir / "metrics.csv", run_dir / "timing.csv"
    checkpoint_path = run_dir / "checkpoint.npz"
    (run_dir / "config.env").write_text(config.to_env_text(), encoding="utf-8")
    (run_dir / "plot.gp").write_text(plot_script(config.run_name), encoding="utf-8")

    streams = RngStreams.from_seed(config.seed)
    env = make_env(config.env, config.frame_stack, config.max_episode_steps)
    eval_env = make_env(config.env, config.frame_stack, config.max_episode_steps)
    actor = _Actor(make_agent(config, env, streams.init), streams.act)
    rollout = RepeatRollout(env, actor, config.repeat, streams.env)
    buffer = ReplayBuffer()
    schedule = None
    if config.algo == Algo.Dqn:
        schedule = EpsilonSchedule(
            config.total_steps, config.epsilon_start, config.epsilon_end, config.epsilon_decay_fraction
        )

    logger.info("starting %s (%d env steps)", config.run_name, config.total_steps)
    started = time.perf_counter()
    rows: list[MetricsRow] = []
    pending: list[UpdateMetrics] = []
    for env_step in range(1, config.total_steps + 1):
        if schedule is not None:
            actor.agent = actor.agent.with_epsilon(schedule.value(env_step - 1))
        buffer.push(rollout.step())
        try:
            actor.agent, update = train_step(
                actor.agent, buffer, config, env_step, streams.sampler, streams.noise
            )
        except TrainingDivergedError as error:
            rows.append(
                MetricsRow(
                    env_step,
                    rollout.episodes_completed,
                    None,
                    None,
                    wall_seconds=time.perf_counter() - started,
                    status="diverged",
                )
            )
            write_metrics(metrics_path, rows)
            write_timing(timing_path, rows)
            logger.warning("%s diverged: %s", config.run_name, error)
            raise
        if update is not None:
            pending.append(update)
        if env_step % config.eval_interval == 0 or env_step == config.total_steps:
            evaluation = evaluate_policy(
                actor.agent, eval_env, config.eval_episodes, streams.eval, config.repeat
            )
            agent = actor.agent
            rows.append(
                MetricsRow(
                    env_step=env_step,
                    episodes=rollout.episodes_completed,
                    eval_return=evaluation.mean,
                    eval_return_std=evaluation.std,
                    q_loss=_mean_or_none([u.q_loss for u in pending]),
                    policy_loss=_mean_or_none(
                        [u.policy_loss for u in pending if u.policy_loss is not None]
                    ),
                    alpha=agent.alpha if isinstance(agent, SacAgent) else None,
                    epsilon=agent.epsilon if isinstance(agent, DqnAgent) else None,
                    wall_seconds=time.perf_counter() - started,
                )
            )
            pending.clear()
            write_metrics(metrics_path, rows)
            write_timing(timing_path, rows)
            logger.info(
                "%s step %d: eval return %.2f ± %.2f, q loss %s",
                config.run_name,
                env_step,
                evaluation.mean,
                evaluation.std,
                _cell(rows[-1].q_loss) or "-",
            )

    save_checkpoint(actor.agent, checkpoint_path, config.total_steps, config.to_env_text())
    return RunResult(run_dir, metrics_path, checkpoint_path, tuple(rows), actor.agent)


@dataclass(frozen=True)
class MetricsFile:
    path: Path
    config: RunConfig
    env_steps: tuple[int, ...]
    eval_returns: tuple[float, ...]

    def final_performance(self, window: float = FINAL_WINDOW) -> float:
        """Mean eval return over the last ``window`` share of env steps."""
        last = self.env_steps[-1]
        cutoff = last * (1.0 - window)
        values = [r for s, r in zip(self.env_steps, self.eval_returns) if s > cutoff]
        return float(np.mean(values or [self.eval_returns[-1]]))


def read_metrics(path: str | Path) -> MetricsFile:
    """
    Load a run's ``metrics.csv`` and the ``config.env`` beside it.

    Raises:
        SchemaError: Missing schema line, wrong columns, or no evaluation rows.
    """
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: no such metrics file")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != f"# schema={METRICS_SCHEMA}":
        raise SchemaError(f"{path}: expected '# schema={METRICS_SCHEMA}' on the first line")
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
        raise SchemaError(f"{path}: columns {reader.fieldnames} do not match {list(METRICS_COLUMNS)}")
    steps, returns = [], []
    for record in reader:
        if record["status"] != "ok":
            continue
        steps.append(int(record["env_step"]))
        returns.append(float(record["eval_return"]))
    if not steps:
        raise SchemaError(f"{path}: no evaluation rows")
    config_path = path.parent / "config.env"
    if not config_path.is_file():
        raise SchemaError(f"{path}: missing {config_path.name} next to the metrics file")
    return MetricsFile(path, parse_config(config_path), tuple(steps), tuple(returns))


@dataclass(frozen=True)
class GroupSummary:
    key: tuple[tuple[str, str], ...]
    n_runs: int
    final_mean: float
    final_std: float
    finals: tuple[float, ...]

    def label(self, name: str) -> str:
        return dict(self.key)[name]


def compare_runs(
    paths: Sequence[str | Path],
    group_by: Sequence[str] = ("algo", "repeat", "mode"),
) -> list[GroupSummary]:
    """
    Final performance per group of runs, mean and sample standard deviation
    over the runs in each group (0 for a single run). Groups are ordered by
    algorithm, then repeat length, then mode.
    """
    unknown = [key for key in group_by if key not in GROUP_KEYS]
    if unknown:
        raise ConfigurationError(f"cannot group by {unknown}; choose from {', '.join(GROUP_KEYS)}")
    if not paths:
        raise ConfigurationError("compare needs at least one metrics file")
    groups: dict[tuple, list[float]] = {}
    for path in paths:
        metrics = read_metrics(path)
        key = tuple((name, str(getattr(metrics.config, name))) for name in group_by)
        sort_key = (
            str(metrics.config.algo) if "algo" in group_by else "",
            metrics.config.repeat if "repeat" in group_by else 0,
            str(metrics.config.mode) if "mode" in group_by else "",
            str(metrics.config.env) if "env" in group_by else "",
        )
        groups.setdefault((sort_key, key), []).append(metrics.final_performance())
    summaries = []
    for (_, key), finals in sorted(groups.items()):
        values = np.array(finals)
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        summaries.append(GroupSummary(key, len(values), float(values.mean()), std, tuple(finals)))
    return summaries


def summary_table(summaries: Sequence[GroupSummary]) -> Table:
    table = Table(title="Final-window eval return")
    names = [name for name, _ in summaries[0].key] if summaries else []
    for name in names:
        table.add_column(name, style="cyan")
    table.add_column("runs", justify="right")
    table.add_column("mean", justify="right", style="green")
    table.add_column("std", justify="right")
    for summary in summaries:
        table.add_row(
            *(summary.label(name) for name in names),
            str(summary.n_runs),
            f"{summary.final_mean:.3f}",
            f"{summary.final_std:.3f}",
        )
    return table


def write_summary_csv(summaries: Sequence[GroupSummary], path: str | Path) -> Path:
    path = Path(path)
    names = [name for name, _ in summaries[0].key] if summaries else []
    rows = (
        [*(s.label(name) for name in names), str(s.n_runs), repr(s.final_mean), repr(s.final_std)]
        for s in summaries
    )
    _atomic_write(path, _csv_text([*names, "runs", "final_mean", "final_std"], rows))
    return path
