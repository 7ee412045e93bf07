import argparse
import logging
import sys

from .checks import format_results, run_checks
from .config import (
    DEFAULT_LOG_FORMAT,
    DEFAULT_LOG_LEVEL,
    LogFormat,
    LogLevel,
    RunConfig,
    get_args,
    load_configuration,
)
from .driver import converge, run
from .errors import LdgError

APP_NAME = "ldgcouple"

# Logger for this module
logger = logging.getLogger(__name__)


def setup_logging(log_level: LogLevel, log_format: LogFormat) -> None:
    """Configures the root logger from the run configuration."""
    level = getattr(logging, log_level.upper(), logging.INFO)

    if log_format == "json":
        log_formatter = logging.Formatter(
            """{"timestamp": "%(asctime)s", "level": "%(levelname)s", "name": "%(name)s", "message": "%(message)s"}"""
        )
    else:
        log_formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    # Remove any existing handlers to avoid duplicate logs if reconfiguring
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(log_formatter)
    root_logger.addHandler(stream_handler)

    logger.debug(f"Logging configured: Level={log_level}, Format={log_format}")


def _orders(value: str) -> list[int]:
    try:
        orders = [int(item) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Orders must be a comma-separated list of integers, got '{value}'") from e
    if not orders or min(orders) < 0:
        raise argparse.ArgumentTypeError(f"Orders must be non-negative, got '{value}'")
    return orders


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="TOML file with dotted keys (mesh.refinement = 2).")
    common.add_argument(
        "--log-level",
        type=str,
        choices=get_args(LogLevel),
        default=None,
        help=(
            f"Logging level. Choices: {', '.join(get_args(LogLevel))}. "
            f"Overrides LDG_LOG_LEVEL env var. Defaults to {DEFAULT_LOG_LEVEL}."
        ),
    )
    common.add_argument(
        "--log-format",
        type=str,
        choices=get_args(LogFormat),
        default=None,
        help=(
            f"Logging output format. Choices: {', '.join(get_args(LogFormat))}. "
            f"Overrides LDG_LOG_FORMAT env var. Defaults to {DEFAULT_LOG_FORMAT}."
        ),
    )
    common.add_argument("--output-dir", type=str, default=None, help="Directory for CSV output. Overrides LDG_OUTPUT_DIR.")
    common.add_argument("--end-time", type=float, default=None, help="Final simulation time T.")

    parser = argparse.ArgumentParser(
        prog=APP_NAME, description="LDG solver for coupled free-surface and Darcy flow on a vertical slice"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="Run one scenario and write energy, field and mesh CSV files.")
    conv = sub.add_parser("converge", parents=[common], help="Manufactured-solution convergence study.")
    conv.add_argument("--levels", type=int, default=3, help="Number of refinement levels j = 0..levels-1.")
    conv.add_argument("--orders", type=_orders, default=[1], help="Comma-separated polynomial orders, e.g. 1,2.")
    conv.add_argument("--jobs", type=int, default=1, help="Worker processes for independent levels.")
    check = sub.add_parser("selftest", parents=[common], help="Run the invariant checks.")
    check.add_argument("--only", nargs="*", default=None, help="Check name prefixes to run (default: all).")
    return parser


def _run(config: RunConfig) -> int:
    result = run(config)
    last = result.budgets[-1]
    print(f"t={last.time:.6g} steps={last.step} energy={last.total:.12e}")
    for name, path in result.outputs.items():
        print(f"{name}: {path}")
    return 0


def _converge(config: RunConfig, args: argparse.Namespace) -> int:
    report = converge(config, args.levels, args.orders, args.jobs)
    print(report.format_table())
    failed = sum(row["status"] == "failed" for row in report.rows)
    if failed:
        logger.warning(f"{failed} report rows belong to failed levels")
    return 0


def _selftest(config: RunConfig, args: argparse.Namespace) -> int:
    results = run_checks(args.only, config.seed)
    print(format_results(results))
    return 0 if results and all(r.passed for r in results) else 1


def cli_entry_point(argv: list[str] | None = None) -> int:
    """
    Command-line interface entry point for ldgcouple.
    Parses arguments, loads configuration and dispatches run / converge / selftest.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # Handles --help, invalid arguments from argparse
        return e.code if isinstance(e.code, int) else 1

    try:
        config = load_configuration(args)
    except LdgError as e:
        logging.basicConfig()
        logger.error(f"{e}")
        return 1
    setup_logging(config.log_level, config.log_format)
    logger.debug(f"{APP_NAME} {args.command} with configuration: {config}")

    try:
        if args.command == "run":
            return _run(config)
        if args.command == "converge":
            return _converge(config, args)
        return _selftest(config, args)
    except LdgError as e:
        logger.error(f"{APP_NAME} {args.command} failed: {e}")
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception:
        logger.exception(f"An unhandled error occurred in {APP_NAME}.")
        return 1


if __name__ == "__main__":
    sys.exit(cli_entry_point())
