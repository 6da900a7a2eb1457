"""Command-line entry point: ``pseudo-action <train|verify|compare|sweep>``."""

import argparse
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from rich.table import Table

from .config import RunConfig, parse_config
from .errors import PseudoActionError
from .harness import compare_runs, run_experiment, summary_table, write_summary_csv
from .log import console, get_logger, setup_logging
from .verifier import DEFAULT_SUBSTEPS, DYNAMICS, run_verification, write_verification_csv

logger = get_logger(__name__)

EPILOG = """
Examples:
  %(prog)s train --algo sac --mode pseudo --repeat 8 --seed 0 --steps 100000
  %(prog)s train --config run.env --set twin_q=true --out runs
  %(prog)s verify --out verify.csv
  %(prog)s compare --group mode,repeat runs/*/metrics.csv
  %(prog)s sweep --algo dqn --modes baseline,pseudo --repeats 4,8 --seeds 0,1,2,3,4
"""


def _csv_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument("--env", help="pendulum, pushbar or integrator")
    parser.add_argument("--algo", choices=["sac", "dqn"])
    parser.add_argument("--steps", type=int, dest="total_steps", help="total environment steps")
    parser.add_argument("--out", help="output directory (default: runs)")
    parser.add_argument(
        "--set",
        type=_key_value,
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key; repeatable",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudo-action",
        description="Pseudo-action replay experiments and the approximation verifier",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--log-level", default="INFO", help="logging level (default: INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train one agent and write its metrics")
    _add_run_options(train)
    train.add_argument("--mode", choices=["baseline", "pseudo"])
    train.add_argument("--repeat", type=int, help="action repeat length T")
    train.add_argument("--seed", type=int)

    verify = commands.add_parser(
        "verify", aliases=["verify-appendix-a"], help="measure pseudo-action endpoint gaps"
    )
    verify.add_argument(
        "--dynamics", type=_csv_list, default=list(DYNAMICS), help="comma-separated dynamics names"
    )
    verify.add_argument("--p", type=float, default=0.5, help="fraction of the block on u1")
    verify.add_argument("--u1", type=float, default=2.0)
    verify.add_argument("--u2", type=float, default=-2.0)
    verify.add_argument("--substeps", type=int, default=DEFAULT_SUBSTEPS, help="RK4 steps per block")
    verify.add_argument("--out", type=Path, default=Path("verify.csv"), help="CSV to write")

    compare = commands.add_parser("compare", help="summarize final performance over runs")
    compare.add_argument("paths", nargs="+", type=Path, help="metrics.csv files")
    compare.add_argument("--group", type=_csv_list, default=["algo", "repeat", "mode"])
    compare.add_argument("--csv", type=Path, help="also write the summary as CSV")

    sweep = commands.add_parser("sweep", help="run modes x repeats x seeds, then compare")
    _add_run_options(sweep)
    sweep.add_argument("--modes", type=_csv_list, default=["baseline", "pseudo"])
    sweep.add_argument("--repeats", type=_csv_list, default=["4", "8"])
    sweep.add_argument("--seeds", type=_csv_list, default=["0", "1", "2", "3", "4"])
    sweep.add_argument("--workers", type=int, default=None, help="parallel processes")
    return parser


def _config_from_args(args: argparse.Namespace, **extra) -> RunConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in ("env", "algo", "total_steps", "out", "mode", "repeat", "seed")
    }
    overrides.update(dict(args.set))
    overrides.update(extra)
    return parse_config(args.config, overrides)


def _train(args: argparse.Namespace) -> int:
    result = run_experiment(_config_from_args(args))
    last = result.rows[-1]
    console.print(
        f"[bold green]done[/bold green] {result.run_dir}: "
        f"final eval return {last.eval_return:.3f} after {last.env_step} env steps"
    )
    return 0


def _verify(args: argparse.Namespace) -> int:
    report = run_verification(args.dynamics, args.p, args.u1, args.u2, substeps=args.substeps)
    write_verification_csv(report, args.out)
    table = Table(title="Pseudo-action gap checks")
    for column in ("dynamics", "check", "value", "band", "result"):
        table.add_column(column)
    for check in report.checks:
        verdict = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.dynamics, check.quantity, check.value, check.band, verdict)
    console.print(table)
    return 0 if report.passed else 1


def _compare(args: argparse.Namespace) -> int:
    summaries = compare_runs(args.paths, args.group)
    console.print(summary_table(summaries))
    if args.csv is not None:
        write_summary_csv(summaries, args.csv)
    return 0


def _run_quietly(config: RunConfig) -> Path:
    setup_logging(logging.WARNING)
    return run_experiment(config).metrics_path


def _sweep(args: argparse.Namespace) -> int:
    configs = [
        _config_from_args(args, mode=mode, repeat=repeat, seed=seed)
        for mode, repeat, seed in itertools.product(args.modes, args.repeats, args.seeds)
    ]
    logger.info("sweeping %d runs", len(configs))
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        paths = list(pool.map(_run_quietly, configs))
    summaries = compare_runs(paths, ["algo", "repeat", "mode"])
    console.print(summary_table(summaries))
    write_summary_csv(summaries, Path(configs[0].out) / "summary.csv")
    return 0


COMMANDS = {
    "train": _train,
    "verify": _verify,
    "verify-appendix-a": _verify,
    "compare": _compare,
    "sweep": _sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    """
    Parse ``argv`` and run the chosen command.

    Returns:
        int: 0 on success, 1 when a verification band fails, 2 on a usage or
        data error.
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level.upper())
    try:
        return COMMANDS[args.command](args)
    except PseudoActionError as error:
        console.print(f"[bold red]{type(error).__name__}:[/bold red] {error}")
        return 2
    except KeyboardInterrupt:
        console.print("\n[bold yellow]interrupted by user[/bold yellow]")
        return 1


if __name__ == "__main__":
    sys.exit(main())
