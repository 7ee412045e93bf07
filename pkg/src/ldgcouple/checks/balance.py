"""Short coupled runs: lake at rest, closed-box volume and energy behaviour."""

import logging
from typing import Any

import numpy as np
from scipy import stats

from ..coupling import EnergyBudget, coupled_step, coupled_volume
from ..driver import setup
from . import CheckOutcome
from ._support import small_config

logger = logging.getLogger(__name__)

STEPS = 1000


def rest_drift(steps: int = STEPS) -> float:
    """Largest change of any Ξ, U or H̃ coefficient over ``steps`` coupled steps from the lake at rest."""
    problem, state, _ = setup(small_config(scenario="rest", bed_slope=0.05))
    start = state
    for _ in range(steps):
        state, _ = coupled_step(state, problem)
    return max(
        float(np.max(np.abs(state.hydro.xi.coeffs - start.hydro.xi.coeffs))),
        float(np.max(np.abs(state.hydro.u.coeffs - start.hydro.u.coeffs))),
        float(np.max(np.abs(state.darcy.head.coeffs - start.darcy.head.coeffs))),
    )


def closed_box_run(steps: int = STEPS, **overrides: Any) -> tuple[list[float], list[EnergyBudget], float]:
    """Coupled volume after each step, the energy budgets and the free-flow step of a closed-box bump run."""
    settings: dict[str, Any] = {"scenario": "bump", "bump_amplitude": 0.05, "bump_width": 0.8}
    settings.update(overrides)
    problem, state, _ = setup(small_config(**settings))
    volumes = [coupled_volume(state)]
    budgets: list[EnergyBudget] = []
    for _ in range(steps):
        state, budget = coupled_step(state, problem)
        volumes.append(coupled_volume(state))
        budgets.append(budget)
    return volumes, budgets, problem.dt


def energy_trend(budgets: list[EnergyBudget], dt: float) -> tuple[float, float]:
    """Fitted d/dt of the total energy and the O(dt) slack it is allowed."""
    times = np.array([b.time for b in budgets])
    totals = np.array([b.total for b in budgets])
    fit = stats.linregress(times, totals)
    return float(fit.slope), 10.0 * dt * float(np.max(np.abs(totals)))


def check_rest_lake(seed: int) -> CheckOutcome:
    drift = rest_drift()
    return CheckOutcome(drift < 1e-12, f"max coefficient drift {drift:.1e} over {STEPS} steps")


def check_volume(seed: int) -> CheckOutcome:
    volumes, _, _ = closed_box_run()
    worst = float(np.max(np.abs(np.diff(volumes))))
    return CheckOutcome(worst < 1e-12 * max(1.0, abs(volumes[0])), f"max per-step volume change {worst:.1e}")


def check_energy(seed: int) -> CheckOutcome:
    _, budgets, dt = closed_box_run()
    negative = [
        f"{name}@{b.step}" for b in budgets for name, value in b.dissipation_terms().items() if value < -1e-14
    ]
    slope, slack = energy_trend(budgets, dt)
    passed = not negative and slope <= slack
    detail = f"dE/dt {slope:.2e} (slack {slack:.1e})"
    if negative:
        detail += f", negative terms: {', '.join(negative)}"
    return CheckOutcome(passed, detail)


def get_check_definition() -> dict[str, Any]:
    return {
        "name": "balance",
        "description": "Well-balancedness, volume conservation and energy behaviour of the coupled step.",
        "checks": [
            {"name": "rest_lake", "description": "Lake at rest stays at rest.", "handler": check_rest_lake},
            {"name": "volume", "description": "∫Ξ + ∫H̃ is constant in a closed box.", "handler": check_volume},
            {"name": "energy", "description": "Energy does not grow beyond O(dt).", "handler": check_energy},
        ],
    }
