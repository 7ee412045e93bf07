"""Scenario setup, the simulation driver and the manufactured-solution convergence study."""

import logging
import math
import time
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TypedDict

import numpy as np
import pandas as pd

from .config import RunConfig
from .coupling import (
    CoupledProblem,
    CoupledState,
    EnergyBudget,
    coupled_step,
    energy_budget,
    refresh_auxiliary,
)
from .dgcore import DGField, eoc, l2_error, project_l2
from .errors import ConfigError, LdgError
from .freeflow import HydroBoundaryData, HydroCoefficients, HydroState
from .mesh import LayeredSliceMesh, build_layered_mesh, dump_mesh_csv
from .mms import BED_SLOPE, ManufacturedSolution
from .subsurface import DarcyCoefficients, DarcyState

logger = logging.getLogger(__name__)

REPORT_FIELDS = ("xi", "u", "w", "h", "u_tilde", "w_tilde")


@dataclass
class RunResult:
    state: CoupledState
    budgets: list[EnergyBudget]
    outputs: dict[str, Path] = field(default_factory=dict)


class ConvergenceRow(TypedDict):
    p: int
    j: int
    field: str
    err: float
    eoc: float
    status: str
    runtime_s: float


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    metadata: dict[str, object] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(ConvergenceRow.__annotations__))

    def format_table(self) -> str:
        frame = self.to_frame()
        if frame.empty:
            return "(no converged levels)"
        return frame.to_string(
            index=False,
            columns=["p", "j", "field", "err", "eoc"],
            header=["p", "j", "field", "Err", "EOC"],
            formatters={"err": "{:.2e}".format, "eoc": lambda v: "--" if math.isnan(v) else f"{v:.2f}"},
        )

    def eoc_of(self, p: int, j: int, field_name: str) -> float:
        for row in self.rows:
            if row["p"] == p and row["j"] == j and row["field"] == field_name:
                return row["eoc"]
        raise KeyError((p, j, field_name))


def constant(value: float) -> Callable[..., np.ndarray]:
    return lambda *coords: np.full_like(np.asarray(coords[-1], dtype=float), value)


def _bump(config: RunConfig) -> Callable[[np.ndarray], np.ndarray]:
    center = 0.5 * (config.x_min + config.x_max)

    def elevation(x: np.ndarray) -> np.ndarray:
        return config.rest_level + config.bump_amplitude * np.exp(-(((x - center) / config.bump_width) ** 2))

    return elevation


def setup(config: RunConfig) -> tuple[CoupledProblem, CoupledState, ManufacturedSolution | None]:
    """Build mesh, coefficients, boundary data and the projected initial state for a scenario."""
    config.validate()
    dt, _ = config.steps()
    modes = config.boundary_modes()
    hydro_kwargs: dict = {
        "diffusion": config.diffusion_tensor(),
        "gravity": config.gravity,
        "friction_law": config.friction_law,
        "friction": config.friction,
        "pce_flux": config.resolved_pce_flux(),
    }
    darcy_kwargs: dict = {"conductivity": config.conductivity_tensor(), "penalty": config.penalty}
    solution: ManufacturedSolution | None = None

    if config.scenario == "mms":
        if config.bed_slope != BED_SLOPE or config.z_b_offset != 0.0:
            raise ConfigError(f"The manufactured solution needs z_b = {BED_SLOPE} x")
        sol = ManufacturedSolution(config.diffusion_tensor(), config.conductivity_tensor(), config.gravity)
        solution = sol
        hydro = HydroCoefficients(**hydro_kwargs, forcing_u=sol.momentum_source, forcing_h=sol.pce_source)
        analytic = frozenset(
            "bot" if name == "bottom" else name for name, mode in modes.items() if mode == "mms-dirichlet"
        )
        boundary = HydroBoundaryData(xi_hat=sol.xi, u_hat=sol.u, stress=sol.stress, analytic=analytic)

        def seepage_normal(t: float, x: np.ndarray, z: np.ndarray, nx: np.ndarray, nz: np.ndarray) -> np.ndarray:
            ux, uz = sol.seepage(t, x, z)
            return ux * nx + uz * nz

        darcy = DarcyCoefficients(
            **darcy_kwargs, source=sol.darcy_source, head_bc=sol.head, normal_flux_bc=seepage_normal
        )
        elevation: Callable[[np.ndarray], np.ndarray] = lambda x: sol.xi(0.0, x)  # noqa: E731
        u0: Callable[..., np.ndarray] = lambda x, z: sol.u(0.0, x, z)  # noqa: E731
        head0: Callable[..., np.ndarray] = lambda x, z: sol.head(0.0, x, z)  # noqa: E731
    else:
        hydro = HydroCoefficients(**hydro_kwargs)
        boundary = HydroBoundaryData.closed_box(config.rest_level)
        darcy = DarcyCoefficients(**darcy_kwargs, head_bc=constant(config.rest_level))
        elevation = _bump(config) if config.scenario == "bump" else constant(config.rest_level)
        u0 = constant(0.0)
        head0 = constant(config.rest_level)

    mesh = build_layered_mesh(config, elevation)
    problem = CoupledProblem(hydro, darcy, boundary, dt, config.subcycles, config.mesh_penalty)
    initial = CoupledState(project_hydro(mesh, config, elevation, u0), project_darcy(mesh, config, head0), mesh)
    return problem, refresh_auxiliary(initial, problem), solution


def project_hydro(
    mesh: LayeredSliceMesh, config: RunConfig, xi: Callable[..., np.ndarray], u: Callable[..., np.ndarray]
) -> HydroState:
    """L2 projection of initial Ξ and U; W and Q start at zero until ``refresh_auxiliary``."""
    orders = config.orders()
    mid = mesh.mesh_id
    w_modes = mesh.freeflow_space(orders["w"]).n_modes
    q_modes = mesh.freeflow_space(orders["q"]).n_modes
    return HydroState(
        xi=project_l2(xi, mesh.surface_space(orders["xi"]), "xi", "surface", mid),
        u=project_l2(u, mesh.freeflow_space(orders["u"]), "u", "freeflow", mid),
        w=DGField("w", orders["w"], np.zeros((mesh.n_elements, w_modes)), mid, "freeflow"),
        q=DGField("q", orders["q"], np.zeros((2, mesh.n_elements, q_modes)), mid, "freeflow"),
    )


def project_darcy(mesh: LayeredSliceMesh, config: RunConfig, head: Callable[..., np.ndarray]) -> DarcyState:
    orders = config.orders()
    flux_modes = mesh.darcy_space(orders["flux"]).n_modes
    return DarcyState(
        head=project_l2(head, mesh.darcy_space(orders["head"]), "head", "darcy", mesh.mesh_id),
        flux=DGField("flux", orders["flux"], np.zeros((2, mesh.n_darcy_elements, flux_modes)), mesh.mesh_id, "darcy"),
    )


def simulate(config: RunConfig) -> tuple[CoupledState, list[EnergyBudget], ManufacturedSolution | None]:
    """Run the coupled loop to ``end_time`` without writing files."""
    problem, state, solution = setup(config)
    budgets = [energy_budget(state, problem)]
    n_steps = config.n_coupled_steps()
    logger.info(
        f"Running scenario '{config.scenario}' p={config.order} j={config.refinement}: "
        f"{n_steps} coupled steps, dt={problem.dt:.3e}, subcycles={problem.subcycles}"
    )
    for _ in range(n_steps):
        state, budget = coupled_step(state, problem)
        budgets.append(budget)
    return state, budgets, solution


def _field_frame(field_: DGField) -> pd.DataFrame:
    frames = []
    for comp in range(field_.n_comp):
        frame = pd.DataFrame(field_.coeffs[comp], columns=[f"c{m}" for m in range(field_.coeffs.shape[2])])
        frame.insert(0, "component", comp)
        frame.insert(0, "element", np.arange(field_.n_elements))
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def write_outputs(result: RunResult, output_dir: Path) -> dict[str, Path]:
    output_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {}
    energy_path = output_dir / "energy.csv"
    pd.DataFrame([b.as_row() for b in result.budgets]).to_csv(energy_path, index=False)
    outputs["energy"] = energy_path
    state = result.state
    for field_ in (state.hydro.xi, state.hydro.u, state.hydro.w, state.hydro.q, state.darcy.head, state.darcy.flux):
        path = output_dir / f"fields_{field_.name}.csv"
        _field_frame(field_).to_csv(path, index=False)
        outputs[f"fields_{field_.name}"] = path
    outputs["mesh_elements"], outputs["mesh_faces"] = dump_mesh_csv(state.mesh, output_dir)
    return outputs


def run(config: RunConfig) -> RunResult:
    """Execute coupled steps until the end time and write energy, field and mesh CSV files."""
    started = time.perf_counter()
    state, budgets, _ = simulate(config)
    result = RunResult(state, budgets)
    result.outputs = write_outputs(result, config.output_dir)
    logger.info(
        f"Run finished at t={state.time:.6g} after {state.step} steps in {time.perf_counter() - started:.1f}s; "
        f"output in {config.output_dir}"
    )
    return result


def solution_errors(state: CoupledState, solution: ManufacturedSolution) -> dict[str, float]:
    """
    L2 errors of all unknowns against the manufactured solution at the state's time.

    The Darcy velocity columns compare the recovered head gradient -D̃⁻¹Ũ with grad h̃.
    """
    t, mesh = state.time, state.mesh
    hydro, darcy = state.hydro, state.darcy
    h_space = mesh.darcy_space(darcy.head.order)
    f_space = mesh.darcy_space(darcy.flux.order)
    gradient = -np.einsum("ij,jem->iem", np.linalg.inv(solution.conductivity), darcy.flux.coeffs)
    return {
        "xi": l2_error(hydro.xi.scalar, lambda x: solution.xi(t, x), mesh.surface_space(hydro.xi.order)),
        "u": l2_error(hydro.u.scalar, lambda x, z: solution.u(t, x, z), mesh.freeflow_space(hydro.u.order)),
        "w": l2_error(hydro.w.scalar, lambda x, z: solution.w(t, x, z), mesh.freeflow_space(hydro.w.order)),
        "h": l2_error(darcy.head.scalar, lambda x, z: solution.head(t, x, z), h_space),
        "u_tilde": l2_error(gradient[0], lambda x, z: solution.head_x(t, x, z), f_space),
        "w_tilde": l2_error(gradient[1], lambda x, z: solution.head_z(t, x, z), f_space),
    }


def _run_level(config: RunConfig) -> tuple[dict[str, float], float]:
    started = time.perf_counter()
    state, _, solution = simulate(config)
    assert solution is not None
    return solution_errors(state, solution), time.perf_counter() - started


def converge(config: RunConfig, levels: int, orders: list[int], jobs: int = 1) -> ConvergenceReport:
    """Manufactured-solution runs for every (p, j) with j < ``levels``; EOC from consecutive levels."""
    if levels < 2:
        raise ConfigError(f"A convergence study needs at least two levels, got {levels}")
    if config.scenario != "mms":
        logger.warning(f"Scenario '{config.scenario}' replaced by 'mms' for the convergence study")
    plan = [
        replace(config, scenario="mms", order=p, refinement=j, columns=None, layers=None, darcy_layers=None, dt=None, dt_darcy=None)
        for p in orders
        for j in range(levels)
    ]
    for cfg in plan:
        cfg.validate()

    results: list[tuple[dict[str, float], float] | None] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_level, cfg) for cfg in plan]
            for cfg, future in zip(plan, futures, strict=True):
                results.append(_collect(cfg, future.result))
    else:
        for cfg in plan:
            results.append(_collect(cfg, lambda cfg=cfg: _run_level(cfg)))

    rows: list[ConvergenceRow] = []
    previous: dict[int, tuple[dict[str, float], float]] = {}
    for cfg, outcome in zip(plan, results, strict=True):
        dx = (cfg.x_max - cfg.x_min) / cfg.resolved_columns()
        if outcome is None:
            rows.extend(
                ConvergenceRow(p=cfg.order, j=cfg.refinement, field=name, err=math.nan, eoc=math.nan, status="failed", runtime_s=0.0)
                for name in REPORT_FIELDS
            )
            previous.pop(cfg.order, None)
            continue
        errors, runtime = outcome
        prior = previous.get(cfg.order)
        for name in REPORT_FIELDS:
            rate = math.nan
            if prior is not None and errors[name] > 0.0 and prior[0][name] > 0.0:
                rate = eoc(prior[0][name], errors[name], prior[1], dx)
            rows.append(
                ConvergenceRow(p=cfg.order, j=cfg.refinement, field=name, err=errors[name], eoc=rate, status="ok", runtime_s=runtime)
            )
        previous[cfg.order] = (errors, dx)

    report = ConvergenceReport(rows, {"levels": levels, "orders": list(orders), "end_time": config.end_time})
    config.output_dir.mkdir(parents=True, exist_ok=True)
    path = config.output_dir / "errors.csv"
    report.to_frame().to_csv(path, index=False)
    report.metadata["errors_csv"] = str(path)
    return report


def _collect(cfg: RunConfig, fetch: Callable[[], tuple[dict[str, float], float]]) -> tuple[dict[str, float], float] | None:
    try:
        outcome = fetch()
    except LdgError as e:
        logger.warning(f"Level p={cfg.order} j={cfg.refinement} failed and is skipped: {e}")
        return None
    logger.info(
        f"Level p={cfg.order} j={cfg.refinement} done in {outcome[1]:.1f}s: "
        + ", ".join(f"{k}={v:.3e}" for k, v in outcome[0].items())
    )
    return outcome
