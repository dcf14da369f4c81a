"""Command-line front end: one experiment per invocation."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any

from zkcollide import Experiment, ZKLabError, __version__
from zkcollide.config import ConfigError, load_config
from zkcollide.experiments import run_experiment

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(processName)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_ERROR = 2

# flag -> configuration key, for the options every subcommand accepts
_COMMON_OPTIONS: dict[str, tuple[str, type]] = {
    "--mu0": ("mu0", float),
    "--z0": ("z0", float),
    "--w0": ("w0", float),
    "--dt": ("dt", float),
    "--seed": ("seed", int),
    "--n-seeds": ("n_seeds", int),
    "--workers": ("workers", str),
    "--max-workers": ("max_workers", int),
    "--output-dir": ("output_dir", Path),
    "--cache-dir": ("cache_dir", Path),
}


def _key_value(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        msg = f"expected KEY=VALUE, got {text!r}"
        raise argparse.ArgumentTypeError(msg)
    return key.strip().replace("-", "_"), value.strip()


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="key = value configuration file")
    common.add_argument(
        "--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="root log level"
    )
    common.add_argument(
        "--set",
        dest="overrides",
        type=_key_value,
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any configuration key; repeatable",
    )
    for flag, (key, kind) in _COMMON_OPTIONS.items():
        common.add_argument(flag, dest=key, type=kind, default=None)
    return common


def _add_input(sub: argparse.ArgumentParser, help_text: str) -> None:
    """Input as a positional argument or as --input."""
    sub.add_argument("input", type=Path, nargs="?", default=None, help=help_text)
    sub.add_argument("--input", dest="input_flag", type=Path, default=None, metavar="INPUT", help=help_text)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="zkcollide", description="Two-soliton collisions of the 2D ZK equation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    for experiment in Experiment:
        if experiment in (Experiment.FIELD, Experiment.TRACK):
            continue
        sub = commands.add_parser(experiment.value, parents=[common])
        if experiment is Experiment.VERIFY_ALL:
            sub.add_argument("--full", action="store_true", help="include the collision and stability suites")
        if experiment is Experiment.STABILITY:
            sub.add_argument("--perturb-time", dest="perturb_time", type=float, default=None)

    track = commands.add_parser(Experiment.TRACK.value, parents=[common])
    _add_input(track, "snapshot file or directory of snapshots")

    field = commands.add_parser(Experiment.FIELD.value)
    actions = field.add_subparsers(dest="action", required=True)
    actions.add_parser("dump", parents=[common], help="write the collision initial field")
    load = actions.add_parser("load", parents=[common], help="read a snapshot and report its invariants")
    _add_input(load, "snapshot file")
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    """Typed overrides from the named flags, then the ``--set`` pairs."""
    overrides: dict[str, Any] = {"experiment": Experiment(args.command)}
    for key, _ in _COMMON_OPTIONS.values():
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "full", False):
        overrides["full_suite"] = True
    if getattr(args, "perturb_time", None) is not None:
        overrides["perturb_time"] = args.perturb_time
    given = {path for path in (getattr(args, "input", None), getattr(args, "input_flag", None)) if path is not None}
    if len(given) > 1:
        msg = f"two different inputs: {', '.join(sorted(map(str, given)))}"
        raise ConfigError(msg)
    if given:
        overrides["input"] = given.pop()
    elif getattr(args, "action", None) == "load":
        msg = "field load needs an input snapshot"
        raise ConfigError(msg)
    overrides.update(dict(args.overrides))
    return overrides


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        cfg = load_config(args.config, overrides_from_args(args))
        report = run_experiment(cfg)
    except ConfigError as e:
        logger.error(f"configuration error: {e}")  # noqa: TRY400
        return EXIT_ERROR
    except FileNotFoundError as e:
        logger.error(f"missing input: {e}")  # noqa: TRY400
        return EXIT_ERROR
    except ZKLabError as e:
        logger.exception(f"{args.command} failed: {type(e).__name__}")
        return EXIT_ERROR

    status = "PASS" if report.passed else "FAIL"
    sys.stdout.write(f"{report.experiment}: {status} ({len(report.checks)} checks) -> {cfg.output_dir}\n")
    return EXIT_OK if report.passed else EXIT_CHECKS_FAILED
