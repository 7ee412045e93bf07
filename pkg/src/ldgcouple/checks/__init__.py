"""
Check discovery and execution for the ``selftest`` command.

Each check module in this package defines a `get_check_definition()` function that
returns a dictionary describing a group of invariant checks and their handlers.
Modules whose name starts with an underscore are helpers and are not loaded.
"""

import importlib
import logging
import pkgutil
import time
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckOutcome:
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


CheckHandler = Callable[[int], CheckOutcome]


def discover_checks() -> Iterator[tuple[str, str, CheckHandler]]:
    """
    Loads check modules in this package and yields (full_name, description, handler).

    Example structure for `get_check_definition()` in a check module::

        def get_check_definition():
            return {
                "name": "fluxes",
                "description": "Algebraic properties of the numerical fluxes.",
                "checks": [
                    {"name": "lambda_bound", "description": "...", "handler": check_lambda_bound},
                ],
            }
    """
    package_path = Path(__file__).parent
    package_import_prefix = __name__

    logger.debug(f"Discovering checks in: {package_path} (package import prefix: {package_import_prefix})")

    for _finder, name, _ispkg in pkgutil.iter_modules([str(package_path)]):
        if name.startswith("_"):
            continue

        module_full_name = f"{package_import_prefix}.{name}"
        try:
            module = importlib.import_module(module_full_name)
        except ImportError as e:
            logger.error(f"Failed to import check module '{module_full_name}': {e}", exc_info=True)
            continue

        if not hasattr(module, "get_check_definition"):
            logger.warning(f"Check module '{module_full_name}' does not have a 'get_check_definition' function. Skipping.")
            continue

        definition: dict[str, Any] = module.get_check_definition()
        group = definition.get("name")
        if not group or not isinstance(group, str):
            logger.warning(f"Check definition from '{module_full_name}' is missing 'name'. Skipping.")
            continue

        checks: list[dict[str, Any]] = definition.get("checks", [])
        if not isinstance(checks, list):
            logger.warning(f"Check group '{group}' has invalid 'checks' format (expected list). Skipping.")
            continue

        for entry in checks:
            check_name = entry.get("name")
            handler = entry.get("handler")
            if not check_name or not isinstance(check_name, str) or not callable(handler):
                logger.warning(f"Malformed check entry in group '{group}' from '{module_full_name}'. Skipping.")
                continue
            yield f"{group}_{check_name}", entry.get("description", ""), handler


def run_checks(selected: list[str] | None = None, seed: int = 0) -> list[CheckResult]:
    """Runs every discovered check (or those whose full name starts with one of ``selected``)."""
    results: list[CheckResult] = []
    for full_name, _description, handler in discover_checks():
        if selected and not any(full_name.startswith(prefix) for prefix in selected):
            continue
        started = time.perf_counter()
        try:
            outcome = handler(seed)
        except Exception as e:
            logger.exception(f"Check '{full_name}' raised")
            outcome = CheckOutcome(False, f"{type(e).__name__}: {e}")
        elapsed = time.perf_counter() - started
        results.append(CheckResult(full_name, outcome.passed, outcome.detail, elapsed))
        logger.info(f"{'PASS' if outcome.passed else 'FAIL'} {full_name} ({elapsed:.2f}s) {outcome.detail}")
    return results


def format_results(results: list[CheckResult]) -> str:
    width = max((len(r.name) for r in results), default=10)
    lines = [f"{'check':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)
