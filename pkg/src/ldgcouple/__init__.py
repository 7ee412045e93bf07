"""LDG solver for coupled hydrostatic free-surface and Darcy flow on a vertical slice."""

__version__ = "0.1.0"

from .config import RunConfig
from .coupling import CoupledProblem, CoupledState, EnergyBudget, coupled_step, energy_budget
from .driver import ConvergenceReport, converge, run

__all__ = [
    "__version__",
    "ConvergenceReport",
    "CoupledProblem",
    "CoupledState",
    "EnergyBudget",
    "RunConfig",
    "converge",
    "coupled_step",
    "energy_budget",
    "run",
]
