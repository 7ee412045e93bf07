"""
Interface exchange between free flow and Darcy flow, the subcycled coupled time step
and the discrete energy budget.

Interface quantities live at the quadrature points of the free-flow bottom faces,
which coincide pointwise with the Darcy top faces. Normal fluxes are stored in the
free-flow orientation (normal pointing out of the free-flow domain, into the ground).
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import FrictionLaw
from .dgcore import LineSpace, QuadSpace
from .errors import InstabilityError, MeshError, SolveError
from .freeflow import (
    HydroBoundaryData,
    HydroCoefficients,
    HydroState,
    SurfaceCoupler,
    assemble_momentum_rhs,
    assemble_pce_rhs,
    compute_lambda_u,
    friction_stress,
    solve_auxiliary_Q,
    solve_vertical_velocity,
    surface_gap,
)
from .mesh import LayeredSliceMesh, move_mesh, smooth_free_surface
from .subsurface import DarcyCoefficients, DarcyState, assemble_darcy_head_rhs, solve_darcy_flux

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e12
DISSIPATION_TOLERANCE = 1e-14


@dataclass
class InterfaceTrace:
    """Per bottom face and quadrature point: Ũ·n, dynamic head and friction stress."""

    normal_flux: np.ndarray
    dynamic_head: np.ndarray
    friction: np.ndarray


@dataclass
class CoupledState:
    hydro: HydroState
    darcy: DarcyState
    mesh: LayeredSliceMesh
    time: float = 0.0
    step: int = 0
    previous_gap: np.ndarray | None = field(default=None, repr=False)

    def copy(self) -> "CoupledState":
        gap = None if self.previous_gap is None else self.previous_gap.copy()
        return CoupledState(self.hydro.copy(), self.darcy.copy(), self.mesh, self.time, self.step, gap)


@dataclass(frozen=True)
class CoupledProblem:
    """Everything a coupled step needs besides the state."""

    hydro: HydroCoefficients
    darcy: DarcyCoefficients
    boundary: HydroBoundaryData
    dt: float
    subcycles: int = 10
    mesh_penalty: bool = True

    @property
    def dt_darcy(self) -> float:
        return self.subcycles * self.dt


@dataclass
class EnergyBudget:
    time: float
    step: int
    xi_sq: float
    u_sq: float
    head_sq: float
    q_dissipation: float
    lambda_jump: float
    inflow_penalty: float
    friction: float
    darcy_flux_dissipation: float
    head_penalty: float
    darcy_dirichlet_penalty: float
    interface_transfer: float
    elevation_penalty: float = 0.0

    @property
    def total(self) -> float:
        return self.xi_sq + self.u_sq + self.head_sq

    def dissipation_terms(self) -> dict[str, float]:
        return {
            "q_dissipation": self.q_dissipation,
            "lambda_jump": self.lambda_jump,
            "inflow_penalty": self.inflow_penalty,
            "friction": self.friction,
            "darcy_flux_dissipation": self.darcy_flux_dissipation,
            "head_penalty": self.head_penalty,
            "darcy_dirichlet_penalty": self.darcy_dirichlet_penalty,
            "elevation_penalty": self.elevation_penalty,
        }

    def as_row(self) -> dict[str, float]:
        row = asdict(self)
        row["total"] = self.total
        return row


def interface_dynamic_head(xi_trace: np.ndarray, u_trace: np.ndarray, gravity: float = 1.0) -> np.ndarray:
    return xi_trace + u_trace * u_trace / (2.0 * gravity)


def _check_pairing(mesh: LayeredSliceMesh) -> None:
    bot, top = mesh.faces["bot"], mesh.darcy_faces["top"]
    if not np.array_equal(bot.owner // mesh.layers, top.owner // mesh.darcy_layers):
        raise MeshError("Free-flow bottom faces and Darcy top faces are not paired column by column")


def interface_normal_flux(darcy: DarcyState, mesh: LayeredSliceMesh) -> np.ndarray:
    """Ũ·n on the interface, n being the free-flow bottom normal (= -ñ)."""
    _check_pairing(mesh)
    top = mesh.darcy_faces["top"]
    space = mesh.darcy_space(darcy.flux.order)
    ux = space.trace(darcy.flux.coeffs[0], top.owner, top.owner_face)
    uz = space.trace(darcy.flux.coeffs[1], top.owner, top.owner_face)
    return -(ux * top.normal[:, 0:1] + uz * top.normal[:, 1:2])


def interface_friction(u_trace: np.ndarray, law: FrictionLaw, coefficient: float) -> np.ndarray:
    return friction_stress(u_trace, law, coefficient)


def _bottom_traces(hydro: HydroState, mesh: LayeredSliceMesh) -> tuple[np.ndarray, np.ndarray]:
    bot = mesh.faces["bot"]
    coupler = SurfaceCoupler(mesh, hydro.xi.order)
    xi = coupler.at_faces(hydro.xi.scalar, bot.owner, bot.owner_face)
    u = mesh.freeflow_space(hydro.u.order).trace(hydro.u.scalar, bot.owner, bot.owner_face)
    return xi, u


def interface_trace(state: CoupledState, problem: CoupledProblem) -> InterfaceTrace:
    xi, u = _bottom_traces(state.hydro, state.mesh)
    return InterfaceTrace(
        normal_flux=interface_normal_flux(state.darcy, state.mesh),
        dynamic_head=interface_dynamic_head(xi, u, problem.hydro.gravity),
        friction=interface_friction(u, problem.hydro.friction_law, problem.hydro.friction),
    )


def _guard(arrays: dict[str, np.ndarray], step: int, time: float) -> None:
    for name, values in arrays.items():
        if not np.all(np.isfinite(values)):
            raise InstabilityError(f"Non-finite coefficients in {name}", step, time)
        peak = float(np.max(np.abs(values))) if values.size else 0.0
        if peak > BLOWUP_THRESHOLD:
            raise InstabilityError(f"Coefficients of {name} exceed {BLOWUP_THRESHOLD:.0e} (max {peak:.3e})", step, time)


def _inflow_value(mesh: LayeredSliceMesh, boundary: HydroBoundaryData, t: float) -> float | None:
    for node, tag in mesh.surface.boundary_tags.items():
        if tag == "inflow":
            return float(np.asarray(boundary.xi_hat(t, np.array([mesh.surface.nodes[node]])))[0])
    return None


def free_flow_substep(state: CoupledState, problem: CoupledProblem, interface_flux: np.ndarray) -> CoupledState:
    """One explicit Euler step of the free flow: Q, W, rates, update, smooth and move the mesh."""
    mesh, t, dt = state.mesh, state.time, problem.dt
    hydro = state.hydro
    q = hydro.q.with_coeffs(solve_auxiliary_Q(hydro, mesh, problem.hydro, problem.boundary, t))
    hydro = HydroState(hydro.xi, hydro.u, hydro.w, q)
    w = hydro.w.with_coeffs(solve_vertical_velocity(hydro, mesh, interface_flux, problem.boundary, t))
    hydro = HydroState(hydro.xi, hydro.u, w, q)

    gap = surface_gap(mesh, hydro.xi)
    if problem.mesh_penalty and state.previous_gap is not None:
        gap_rate = (gap - state.previous_gap) / dt
    else:
        gap_rate = np.zeros_like(gap)

    dxi = assemble_pce_rhs(hydro, mesh, problem.hydro, interface_flux, problem.boundary, t)
    du = assemble_momentum_rhs(hydro, mesh, problem.hydro, gap_rate, interface_flux, problem.boundary, t)
    xi = hydro.xi.with_coeffs(hydro.xi.scalar + dt * dxi)
    u = hydro.u.with_coeffs(hydro.u.scalar + dt * du)
    _guard({"xi": xi.coeffs, "u": u.coeffs, "q": hydro.q.coeffs, "w": hydro.w.coeffs}, state.step, t + dt)

    xi_s = smooth_free_surface(xi, mesh.surface, _inflow_value(mesh, problem.boundary, t + dt))
    moved = move_mesh(mesh, xi_s)
    return CoupledState(HydroState(xi, u, hydro.w, hydro.q), state.darcy, moved, t + dt, state.step, gap)


def coupled_step(state: CoupledState, problem: CoupledProblem) -> tuple[CoupledState, EnergyBudget]:
    """
    Advance both subdomains by one Darcy step.

    The Darcy normal flux is frozen over ``subcycles`` free-flow steps; the head is
    then advanced with that same flux and Ũ is re-solved against the dynamic head of
    the new free-flow state.
    """
    t0 = state.time
    frozen = interface_normal_flux(state.darcy, state.mesh)
    current = state
    for _ in range(problem.subcycles):
        current = free_flow_substep(current, problem, frozen)

    darcy = state.darcy
    dhead = assemble_darcy_head_rhs(darcy, current.mesh, problem.darcy, frozen, t0)
    head = darcy.head.with_coeffs(darcy.head.scalar + problem.dt_darcy * dhead)
    t1 = t0 + problem.dt_darcy
    xi_b, u_b = _bottom_traces(current.hydro, current.mesh)
    dynamic_head = interface_dynamic_head(xi_b, u_b, problem.hydro.gravity)
    flux = darcy.flux.with_coeffs(
        solve_darcy_flux(DarcyState(head, darcy.flux), current.mesh, problem.darcy, dynamic_head, t1)
    )
    _guard({"head": head.coeffs, "darcy flux": flux.coeffs}, state.step + 1, t1)

    new_state = CoupledState(current.hydro, DarcyState(head, flux), current.mesh, t1, state.step + 1, current.previous_gap)
    budget = energy_budget(new_state, problem)
    logger.debug(f"Step {new_state.step} t={t1:.6g}: energy {budget.total:.12e}, transfer {budget.interface_transfer:.3e}")
    return new_state, budget


def refresh_auxiliary(state: CoupledState, problem: CoupledProblem) -> CoupledState:
    """Recompute Q, W and Ũ for the stored primary unknowns (used after projection of initial data)."""
    xi_b, u_b = _bottom_traces(state.hydro, state.mesh)
    head = interface_dynamic_head(xi_b, u_b, problem.hydro.gravity)
    mesh, t = state.mesh, state.time
    darcy = state.darcy
    darcy = DarcyState(darcy.head, darcy.flux.with_coeffs(solve_darcy_flux(darcy, mesh, problem.darcy, head, t)))
    flux = interface_normal_flux(darcy, mesh)
    hydro = state.hydro
    q = hydro.q.with_coeffs(solve_auxiliary_Q(hydro, mesh, problem.hydro, problem.boundary, t))
    hydro = HydroState(hydro.xi, hydro.u, hydro.w, q)
    w = hydro.w.with_coeffs(solve_vertical_velocity(hydro, mesh, flux, problem.boundary, t))
    return CoupledState(HydroState(hydro.xi, hydro.u, w, q), darcy, mesh, t, state.step, state.previous_gap)


def coupled_volume(state: CoupledState) -> float:
    """∫Ξ over the surface plus ∫H̃ over the Darcy block."""
    xi_space = state.mesh.surface_space(state.hydro.xi.order)
    h_space = state.mesh.darcy_space(state.darcy.head.order)
    return xi_space.integrate(xi_space.values(state.hydro.xi.scalar)) + h_space.integrate(
        h_space.values(state.darcy.head.scalar)
    )


def _square_norm(space: LineSpace | QuadSpace, coeffs: np.ndarray) -> float:
    v = space.values(coeffs)
    return space.integrate(v * v)


def _tensor_norm(space: QuadSpace, comps: np.ndarray, inverse: np.ndarray) -> float:
    vx, vz = space.values(comps[0]), space.values(comps[1])
    return space.integrate(inverse[0, 0] * vx * vx + 2.0 * inverse[0, 1] * vx * vz + inverse[1, 1] * vz * vz)


def _elevation_penalty(state: CoupledState, problem: CoupledProblem) -> float:
    """λ/2 [Ξ]² over lateral and inflow faces; zero for the central PCE flux."""
    if problem.hydro.pce_flux != "lax-friedrichs":
        return 0.0
    mesh, hydro, t = state.mesh, state.hydro, state.time
    u_space = mesh.freeflow_space(hydro.u.order)
    coupler = SurfaceCoupler(mesh, hydro.xi.order)
    u, xi = hydro.u.scalar, hydro.xi.scalar
    total = 0.0
    for name in ("lat", "inflow"):
        fs = mesh.faces[name]
        if not fs.size:
            continue
        nx = fs.normal[:, 0:1]
        u_o = u_space.trace(u, fs.owner, fs.owner_face)
        xi_o = coupler.at_faces(xi, fs.owner, fs.owner_face)
        if name == "lat":
            u_n = u_space.trace(u, fs.neighbor, fs.neighbor_face)
            lam = compute_lambda_u(name, u_o * nx, u_n * nx)
            jump = xi_o - coupler.at_faces(xi, fs.neighbor, fs.neighbor_face)
        else:
            lam = compute_lambda_u(name, u_o * nx)
            jump = xi_o - problem.boundary.xi_hat(t, u_space.face_points(fs.owner, fs.owner_face)[0])
        total += float(np.sum(0.5 * lam * jump**2 * fs.weights(u_space)))
    return total


def energy_budget(state: CoupledState, problem: CoupledProblem) -> EnergyBudget:
    """Quadratic energy and dissipation terms of the coupled system at the state's time."""
    mesh, hydro, darcy, t = state.mesh, state.hydro, state.darcy, state.time
    u_space = mesh.freeflow_space(hydro.u.order)
    h_space = mesh.darcy_space(darcy.head.order)
    u = hydro.u.scalar

    lambda_jump = 0.0
    lat = mesh.faces["lat"]
    if lat.size:
        u_o = u_space.trace(u, lat.owner, lat.owner_face)
        u_n = u_space.trace(u, lat.neighbor, lat.neighbor_face)
        lam = compute_lambda_u("lat", u_o * lat.normal[:, 0:1], u_n * lat.normal[:, 0:1])
        lambda_jump = float(np.sum(0.5 * lam * (u_o - u_n) ** 2 * lat.weights(u_space)))

    inflow_penalty = 0.0
    inflow = mesh.faces["inflow"]
    if inflow.size:
        u_o = u_space.trace(u, inflow.owner, inflow.owner_face)
        u_hat = problem.boundary.u_hat(t, *u_space.face_points(inflow.owner, inflow.owner_face))
        lam = compute_lambda_u("inflow", u_o * inflow.normal[:, 0:1])
        inflow_penalty = float(np.sum(0.5 * lam * (u_o - u_hat) ** 2 * inflow.weights(u_space)))

    bot = mesh.faces["bot"]
    xi_b, u_b = _bottom_traces(hydro, mesh)
    stress = interface_friction(u_b, problem.hydro.friction_law, problem.hydro.friction)
    friction = float(np.sum(stress * u_b * bot.weights(u_space)))
    flux = interface_normal_flux(darcy, mesh)
    transfer = float(np.sum(interface_dynamic_head(xi_b, u_b, problem.hydro.gravity) * flux * bot.weights(u_space)))

    eta = problem.darcy.penalty
    h = darcy.head.scalar
    head_penalty = 0.0
    faces = mesh.darcy_faces["int"]
    if faces.size:
        jump = h_space.trace(h, faces.owner, faces.owner_face) - h_space.trace(h, faces.neighbor, faces.neighbor_face)
        head_penalty = float(np.sum(eta / faces.length[:, None] * jump**2 * faces.weights(h_space)))
    dirichlet_penalty = 0.0
    faces = mesh.darcy_faces["dirichlet"]
    if faces.size:
        h_hat = problem.darcy.head_bc(t, *h_space.face_points(faces.owner, faces.owner_face))
        gap = h_space.trace(h, faces.owner, faces.owner_face) - h_hat
        dirichlet_penalty = float(np.sum(eta / faces.length[:, None] * gap**2 * faces.weights(h_space)))

    xi_space = mesh.surface_space(hydro.xi.order)
    budget = EnergyBudget(
        time=t,
        step=state.step,
        xi_sq=_square_norm(xi_space, hydro.xi.scalar),
        u_sq=_square_norm(u_space, u),
        head_sq=_square_norm(h_space, h),
        q_dissipation=_tensor_norm(mesh.freeflow_space(hydro.q.order), hydro.q.coeffs, problem.hydro.inverse_diffusion),
        lambda_jump=lambda_jump,
        inflow_penalty=inflow_penalty,
        friction=friction,
        darcy_flux_dissipation=_tensor_norm(
            mesh.darcy_space(darcy.flux.order), darcy.flux.coeffs, problem.darcy.inverse_conductivity
        ),
        head_penalty=head_penalty,
        darcy_dirichlet_penalty=dirichlet_penalty,
        interface_transfer=transfer,
        elevation_penalty=_elevation_penalty(state, problem),
    )
    for name, value in budget.dissipation_terms().items():
        if value < -DISSIPATION_TOLERANCE:
            raise SolveError(f"Dissipation term {name} is negative ({value:.3e}) at t={t:.6g}")
    return budget
