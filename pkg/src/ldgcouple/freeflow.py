"""
LDG residuals for the hydrostatic free-surface system on the layered slice mesh.

Unknowns: surface elevation Ξ (on the surface mesh), horizontal velocity U, the
diagnostic vertical velocity W and the auxiliary stress Q = -D grad U. Face fluxes
follow one table per face class; the momentum equation carries a Lax-Friedrichs type
penalty on interior lateral and inflow faces. With ``pce_flux="lax-friedrichs"`` the
same penalty also acts on jumps of Ξ in the primitive continuity equation.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .config import FrictionLaw, PceFlux
from .dgcore import (
    FACE_TOP,
    DGField,
    QuadSpace,
    face_xi,
    gauss_rule,
    get_basis,
    local_solve,
    mixed_mass,
    split_components,
)
from .errors import ConfigError, SolveError
from .mesh import FaceSet, LayeredSliceMesh

logger = logging.getLogger(__name__)

PointFn = Callable[..., np.ndarray]
StressFn = Callable[..., tuple[np.ndarray, np.ndarray]]


@dataclass
class HydroState:
    """Free-flow unknowns: Ξ (order 2p), U (p), W (2p) and Q (p, two components)."""

    xi: DGField
    u: DGField
    w: DGField
    q: DGField

    def copy(self) -> "HydroState":
        return HydroState(self.xi.copy(), self.u.copy(), self.w.copy(), self.q.copy())


@dataclass(frozen=True)
class HydroCoefficients:
    diffusion: np.ndarray = field(default_factory=lambda: 0.05 * np.eye(2))
    gravity: float = 1.0
    friction_law: FrictionLaw = "linear"
    friction: float = 0.01
    forcing_u: PointFn | None = None  # (t, x, z) -> F_U
    forcing_h: PointFn | None = None  # (t, x) -> F_H
    pce_flux: PceFlux = "central"

    def __post_init__(self) -> None:
        d = np.asarray(self.diffusion, dtype=float)
        if d.shape != (2, 2) or not np.allclose(d, d.T) or np.any(np.linalg.eigvalsh(d) <= 0.0):
            raise ConfigError(f"Eddy viscosity must be a symmetric positive definite 2x2 tensor, got {d.tolist()}")
        if self.friction < 0.0:
            raise ConfigError(f"Friction coefficient must be non-negative, got {self.friction}")
        if self.pce_flux not in ("central", "lax-friedrichs"):
            raise ConfigError(f"Invalid PCE flux '{self.pce_flux}'")

    @property
    def inverse_diffusion(self) -> np.ndarray:
        return np.linalg.inv(self.diffusion)


BOUNDARY_CLASSES = ("top", "bot", "inflow", "outflow")


@dataclass(frozen=True)
class HydroBoundaryData:
    """
    Boundary data ξ̂(t, x), û(t, x, z) and the exact stress Q̂(t, x, z).

    Face classes listed in ``analytic`` take their traces from the data: Q̂·n in S_U on
    every listed class, û·n in R_H on inflow faces and ξ̂ in R_U on outflow faces.
    """

    xi_hat: PointFn
    u_hat: PointFn
    stress: StressFn | None = None
    analytic: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        unknown = set(self.analytic) - set(BOUNDARY_CLASSES)
        if unknown:
            raise ConfigError(f"Analytic boundary traces are not defined on {sorted(unknown)}")
        if self.analytic and self.stress is None:
            raise ConfigError("Analytic boundary traces need the exact stress")

    def exact_stress(
        self, face_class: str, t: float, x: np.ndarray, z: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray] | None:
        if self.stress is None or face_class not in self.analytic:
            return None
        return self.stress(t, x, z)

    @classmethod
    def closed_box(cls, level: float) -> "HydroBoundaryData":
        return cls(
            xi_hat=lambda t, x: np.full_like(np.asarray(x, dtype=float), level),
            u_hat=lambda t, x, z: np.zeros_like(np.asarray(x, dtype=float)),
        )


# Fluxes --------------------------------------------------------------------------------


def compute_lambda_u(face_class: str, un_owner: np.ndarray, un_neighbor: np.ndarray | None = None) -> np.ndarray:
    """Penalty coefficient λ_U on interior lateral ("lat") and inflow faces."""
    if face_class == "lat":
        if un_neighbor is None:
            raise SolveError("Interior lateral λ_U needs both traces")
        mean = 0.5 * (np.abs(un_owner) + np.abs(un_neighbor))
        return mean + np.sqrt(mean * mean + 1.0)
    if face_class == "inflow":
        a = np.abs(un_owner)
        return a + np.sqrt(a * a + 1.0)
    raise SolveError(f"λ_U is not defined on '{face_class}' faces")


def flux_R_H(
    face_class: str,
    nx: np.ndarray,
    u_owner: np.ndarray,
    u_neighbor: np.ndarray | None = None,
    u_hat: np.ndarray | None = None,
    *,
    lam: np.ndarray | None = None,
    xi_jump: np.ndarray | None = None,
) -> np.ndarray:
    """
    Normal PCE flux on lateral faces.

    On inflow faces ``u_hat`` replaces the interior trace when given. ``xi_jump`` is
    Ξ_owner - Ξ_neighbour (ξ̂ on inflow faces) and adds the penalty λ/2 [Ξ].
    """
    if face_class == "lat":
        if u_neighbor is None:
            raise SolveError("Interior lateral R_H needs the neighbour trace")
        flux = 0.5 * (u_owner + u_neighbor) * nx
    elif face_class == "inflow":
        flux = (u_owner if u_hat is None else u_hat) * nx
    elif face_class == "outflow":
        if u_hat is None:
            raise SolveError("Outflow R_H needs boundary velocity data")
        if xi_jump is not None:
            raise SolveError("R_H carries no elevation penalty on outflow faces")
        return u_hat * nx
    else:
        raise SolveError(f"R_H is not defined on '{face_class}' faces")
    if xi_jump is None:
        return flux
    if lam is None:
        raise SolveError(f"The R_H penalty on '{face_class}' faces needs λ_U")
    return flux + 0.5 * lam * xi_jump


def flux_R_U(
    face_class: str,
    nx: np.ndarray,
    u_owner: np.ndarray,
    xi_owner: np.ndarray,
    *,
    gravity: float = 1.0,
    u_neighbor: np.ndarray | None = None,
    xi_neighbor: np.ndarray | None = None,
    advective_normal: np.ndarray | None = None,
    lam: np.ndarray | None = None,
    u_hat: np.ndarray | None = None,
    xi_hat: np.ndarray | None = None,
    interface_flux: np.ndarray | None = None,
) -> np.ndarray:
    """
    Normal momentum flux per face class.

    ``advective_normal`` is U·n of the element below (horizontal faces) or of the
    owner (top faces); ``interface_flux`` is the Darcy normal flux on bottom faces.
    """

    def need(value: np.ndarray | None, what: str) -> np.ndarray:
        if value is None:
            raise SolveError(f"R_U on '{face_class}' faces needs {what}")
        return value

    if face_class == "lat":
        un = need(u_neighbor, "the neighbour trace")
        xn = need(xi_neighbor, "the neighbour elevation")
        penalty = 0.5 * need(lam, "λ_U") * (u_owner - un) * nx * nx
        return 0.5 * (u_owner**2 + un**2) * nx + gravity * 0.5 * (xi_owner + xn) * nx + penalty
    if face_class == "horiz":
        un = need(u_neighbor, "the neighbour trace")
        return 0.5 * (u_owner + un) * need(advective_normal, "U·n from below") + gravity * xi_owner * nx
    if face_class == "top":
        return u_owner * need(advective_normal, "U·n") + gravity * xi_owner * nx
    if face_class == "bot":
        return u_owner * need(interface_flux, "the Darcy interface flux") + gravity * xi_owner * nx
    if face_class == "inflow":
        uh = need(u_hat, "boundary velocity data")
        penalty = 0.5 * need(lam, "λ_U") * (u_owner - uh)
        return u_owner**2 * nx + gravity * need(xi_hat, "inflow elevation data") * nx + penalty
    if face_class == "outflow":
        elevation = xi_owner if xi_hat is None else xi_hat
        return u_owner * need(u_hat, "boundary velocity data") * nx + gravity * elevation * nx
    raise SolveError(f"Unknown free-flow face class '{face_class}'")


def friction_stress(u: np.ndarray, law: FrictionLaw, coefficient: float) -> np.ndarray:
    if coefficient < 0.0:
        raise ConfigError(f"Friction coefficient must be non-negative, got {coefficient}")
    if law == "quadratic":
        return coefficient * np.abs(u) * u
    return coefficient * u


def flux_S_U(
    face_class: str,
    normal: tuple[np.ndarray, np.ndarray],
    q_owner: tuple[np.ndarray, np.ndarray],
    *,
    q_neighbor: tuple[np.ndarray, np.ndarray] | None = None,
    u_owner: np.ndarray | None = None,
    friction_law: FrictionLaw = "linear",
    friction: float = 0.0,
    exact_stress: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Normal diffusive momentum flux; ``normal`` is (nx, nz) broadcastable to the traces."""
    nx, nz = normal
    if face_class in ("lat", "horiz"):
        if q_neighbor is None:
            raise SolveError(f"S_U on '{face_class}' faces needs the neighbour stress")
        return 0.5 * (q_owner[0] + q_neighbor[0]) * nx + 0.5 * (q_owner[1] + q_neighbor[1]) * nz
    if exact_stress is not None:
        return exact_stress[0] * nx + exact_stress[1] * nz
    if face_class in ("inflow", "outflow"):
        return q_owner[0] * nx + q_owner[1] * nz
    if face_class == "top":
        return np.zeros_like(q_owner[0])
    if face_class == "bot":
        if u_owner is None:
            raise SolveError("S_U on bottom faces needs the velocity trace")
        return friction_stress(u_owner, friction_law, friction)
    raise SolveError(f"Unknown free-flow face class '{face_class}'")


def flux_S_Q(
    face_class: str,
    u_owner: np.ndarray,
    u_neighbor: np.ndarray | None = None,
    u_hat: np.ndarray | None = None,
) -> np.ndarray:
    """Scalar trace Ŝ of the LDG gradient flux; the flux itself is Ŝ n."""
    if face_class in ("lat", "horiz"):
        if u_neighbor is None:
            raise SolveError(f"S_Q on '{face_class}' faces needs the neighbour trace")
        return 0.5 * (u_owner + u_neighbor)
    if face_class in ("inflow", "outflow"):
        if u_hat is None:
            raise SolveError("S_Q on lateral boundaries needs boundary velocity data")
        return u_hat
    if face_class in ("top", "bot"):
        return u_owner
    raise SolveError(f"Unknown free-flow face class '{face_class}'")


# Assembly helpers -----------------------------------------------------------------------


class SurfaceCoupler:
    """Evaluates and tests surface (column) fields at slice quadrature points."""

    def __init__(self, mesh: LayeredSliceMesh, order: int) -> None:
        self.mesh = mesh
        basis = get_basis(1, order)
        pts = gauss_rule(mesh.quad_degree, 2).points[:, 0]
        s = gauss_rule(mesh.quad_degree, 1).points
        self.el_psi = basis.values(pts)
        self.el_dpsi = basis.gradients(pts)[:, :, 0]
        self.face_psi = np.stack([basis.values(face_xi(lf, s)) for lf in range(4)])
        self.n_modes = basis.n_modes

    def column(self, elements: np.ndarray) -> np.ndarray:
        return elements // self.mesh.layers

    def at_elements(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs[self.mesh.element_column] @ self.el_psi.T

    def at_faces(self, coeffs: np.ndarray, elements: np.ndarray, local_faces: np.ndarray) -> np.ndarray:
        return np.einsum("fm,fqm->fq", coeffs[self.column(elements)], self.face_psi[local_faces])

    def test_dx(self, weighted: np.ndarray) -> np.ndarray:
        """Σ_K (v, dδ/dx)_K per column, with ``weighted`` = v * wdet."""
        h = self.mesh.surface.h[self.mesh.element_column]
        per_el = np.einsum("eq,qm->em", weighted * (2.0 / h)[:, None], self.el_dpsi)
        return per_el.reshape(self.mesh.n_columns, self.mesh.layers, -1).sum(axis=1)

    def scatter_faces(self, out: np.ndarray, weighted: np.ndarray, elements: np.ndarray, local_faces: np.ndarray) -> None:
        np.add.at(out, self.column(elements), np.einsum("fq,fqm->fm", weighted, self.face_psi[local_faces]))


def _owner_trace(space: QuadSpace, coeffs: np.ndarray, fs: FaceSet) -> np.ndarray:
    return space.trace(coeffs, fs.owner, fs.owner_face)


def _neighbor_trace(space: QuadSpace, coeffs: np.ndarray, fs: FaceSet) -> np.ndarray:
    return space.trace(coeffs, fs.neighbor, fs.neighbor_face)


def _scatter_pair(space: QuadSpace, out: np.ndarray, flux_ds: np.ndarray, fs: FaceSet) -> None:
    """Owner receives -flux, neighbour +flux (both already weighted)."""
    space.scatter_face(out, -flux_ds, fs.owner, fs.owner_face)
    if fs.size and np.all(fs.neighbor >= 0):
        space.scatter_face(out, flux_ds, fs.neighbor, fs.neighbor_face)


def _normals(fs: FaceSet) -> tuple[np.ndarray, np.ndarray]:
    return fs.normal[:, 0:1], fs.normal[:, 1:2]


def _boundary_points(space: QuadSpace, fs: FaceSet) -> tuple[np.ndarray, np.ndarray]:
    return space.face_points(fs.owner, fs.owner_face)


def _check_interface(mesh: LayeredSliceMesh, interface_flux: np.ndarray | None, space: QuadSpace) -> np.ndarray:
    expected = (mesh.faces["bot"].size, space.face_rule.size)
    if interface_flux is None:
        raise SolveError("The Darcy interface flux on bottom faces is required")
    if interface_flux.shape != expected:
        raise SolveError(f"Interface flux has shape {interface_flux.shape}, expected {expected}")
    return interface_flux


def lateral_volume_flux(
    name: str,
    fs: FaceSet,
    space: QuadSpace,
    u: np.ndarray,
    boundary: HydroBoundaryData,
    t: float,
    elevation: tuple[SurfaceCoupler, np.ndarray] | None = None,
) -> np.ndarray:
    """
    R_H at the quadrature points of a lateral face class.

    ``elevation`` is (coupler, Ξ coefficients) and switches on the penalty on jumps of Ξ.
    """
    nx, _ = _normals(fs)
    u_o = _owner_trace(space, u, fs)
    u_n = _neighbor_trace(space, u, fs) if name == "lat" else None
    u_hat = None
    if name == "outflow" or (name == "inflow" and name in boundary.analytic):
        u_hat = boundary.u_hat(t, *_boundary_points(space, fs))
    if elevation is None or name == "outflow":
        return flux_R_H(name, nx, u_o, u_n, u_hat)
    coupler, xi = elevation
    xi_o = coupler.at_faces(xi, fs.owner, fs.owner_face)
    if u_n is not None:
        lam = compute_lambda_u(name, u_o * nx, u_n * nx)
        jump = xi_o - coupler.at_faces(xi, fs.neighbor, fs.neighbor_face)
    else:
        lam = compute_lambda_u(name, u_o * nx)
        jump = xi_o - boundary.xi_hat(t, _boundary_points(space, fs)[0])
    return flux_R_H(name, nx, u_o, u_n, u_hat, lam=lam, xi_jump=jump)


def surface_gap(mesh: LayeredSliceMesh, xi: DGField) -> np.ndarray:
    """Ξ_s - Ξ at the quadrature points of the top faces."""
    fs = mesh.faces["top"]
    space = mesh.freeflow_space(0)
    x, _ = _boundary_points(space, fs)
    coupler = SurfaceCoupler(mesh, xi.order)
    return mesh.xi_s_at(x) - coupler.at_faces(xi.scalar, fs.owner, fs.owner_face)


# Operators ------------------------------------------------------------------------------


def assemble_pce_rhs(
    state: HydroState,
    mesh: LayeredSliceMesh,
    coefficients: HydroCoefficients,
    interface_flux: np.ndarray,
    boundary: HydroBoundaryData,
    t: float,
) -> np.ndarray:
    """∂_t Ξ coefficients, shape (n_columns, n_modes)."""
    xi_space = mesh.surface_space(state.xi.order)
    u_space = mesh.freeflow_space(state.u.order)
    coupler = SurfaceCoupler(mesh, state.xi.order)
    flux = _check_interface(mesh, interface_flux, u_space)
    u = state.u.scalar

    rhs = np.zeros((mesh.n_columns, coupler.n_modes))
    if coefficients.forcing_h is not None:
        rhs += xi_space.test(np.broadcast_to(coefficients.forcing_h(t, xi_space.x), xi_space.x.shape))
    rhs += coupler.test_dx(u_space.wdet * u_space.values(u))
    elevation = (coupler, state.xi.scalar) if coefficients.pce_flux == "lax-friedrichs" else None

    for name in ("lat", "inflow", "outflow"):
        fs = mesh.faces[name]
        if not fs.size:
            continue
        flux_ds = lateral_volume_flux(name, fs, u_space, u, boundary, t, elevation) * fs.weights(u_space)
        coupler.scatter_faces(rhs, -flux_ds, fs.owner, fs.owner_face)
        if name == "lat":
            coupler.scatter_faces(rhs, flux_ds, fs.neighbor, fs.neighbor_face)

    fs = mesh.faces["bot"]
    coupler.scatter_faces(rhs, -flux * fs.weights(u_space), fs.owner, fs.owner_face)
    return xi_space.solve_mass(rhs)


def assemble_momentum_rhs(
    state: HydroState,
    mesh: LayeredSliceMesh,
    coefficients: HydroCoefficients,
    surface_gap_rate: np.ndarray,
    interface_flux: np.ndarray,
    boundary: HydroBoundaryData,
    t: float,
) -> np.ndarray:
    """∂_t U coefficients; ``surface_gap_rate`` is ∂_t(Ξ_s - Ξ) at top-face quadrature points."""
    space = mesh.freeflow_space(state.u.order)
    w_space = mesh.freeflow_space(state.w.order)
    coupler = SurfaceCoupler(mesh, state.xi.order)
    flux = _check_interface(mesh, interface_flux, space)
    top = mesh.faces["top"]
    if surface_gap_rate is None or surface_gap_rate.shape != (top.size, space.face_rule.size):
        raise SolveError("The surface gap rate on top faces is required")
    g = coefficients.gravity
    u, w, xi = state.u.scalar, state.w.scalar, state.xi.scalar
    qx, qz = state.q.coeffs[0], state.q.coeffs[1]

    u_q = space.values(u)
    vx = u_q * u_q + g * coupler.at_elements(xi) + space.values(qx)
    vz = u_q * w_space.values(w) + space.values(qz)
    rhs = space.test_gradient(vx, vz)
    if coefficients.forcing_u is not None:
        rhs += space.test(np.broadcast_to(coefficients.forcing_u(t, space.x, space.z), space.x.shape))

    for name, fs in mesh.faces.items():
        if not fs.size:
            continue
        nx, nz = _normals(fs)
        u_o = _owner_trace(space, u, fs)
        xi_o = coupler.at_faces(xi, fs.owner, fs.owner_face)
        q_o = (_owner_trace(space, qx, fs), _owner_trace(space, qz, fs))
        kwargs: dict = {}
        s_kwargs: dict = {}
        if fs.is_interior:
            kwargs["u_neighbor"] = _neighbor_trace(space, u, fs)
            s_kwargs["q_neighbor"] = (_neighbor_trace(space, qx, fs), _neighbor_trace(space, qz, fs))
        if name == "lat":
            kwargs["xi_neighbor"] = coupler.at_faces(xi, fs.neighbor, fs.neighbor_face)
            kwargs["lam"] = compute_lambda_u(name, u_o * nx, kwargs["u_neighbor"] * nx)
        elif name in ("horiz", "top"):
            kwargs["advective_normal"] = u_o * nx + _owner_trace(w_space, w, fs) * nz
        elif name == "bot":
            kwargs["interface_flux"] = flux
            s_kwargs["u_owner"] = u_o
            s_kwargs["friction_law"] = coefficients.friction_law
            s_kwargs["friction"] = coefficients.friction
        elif name in ("inflow", "outflow"):
            xb, zb = _boundary_points(space, fs)
            kwargs["u_hat"] = boundary.u_hat(t, xb, zb)
            if name == "inflow" or name in boundary.analytic:
                kwargs["xi_hat"] = boundary.xi_hat(t, xb)
            if name == "inflow":
                kwargs["lam"] = compute_lambda_u(name, u_o * nx)
        if name in BOUNDARY_CLASSES:
            exact = boundary.exact_stress(name, t, *_boundary_points(space, fs))
            if exact is not None:
                s_kwargs["exact_stress"] = exact

        total = flux_R_U(name, nx, u_o, xi_o, gravity=g, **kwargs) + flux_S_U(name, (nx, nz), q_o, **s_kwargs)
        if name == "top":
            total = total + 0.5 * nz * surface_gap_rate * u_o
        _scatter_pair(space, rhs, total * fs.weights(space), fs)

    return space.solve_mass(rhs)


def _q_system(
    state: HydroState,
    mesh: LayeredSliceMesh,
    coefficients: HydroCoefficients,
    boundary: HydroBoundaryData,
    t: float,
) -> tuple[np.ndarray, np.ndarray]:
    space = mesh.freeflow_space(state.q.order)
    u_space = mesh.freeflow_space(state.u.order)
    u = state.u.scalar
    if state.u.order != state.q.order:
        raise SolveError("U and Q must share one polynomial order")
    u_q = u_space.values(u)
    rhs = np.stack([space.test_gradient(u_q, np.zeros_like(u_q)), space.test_gradient(np.zeros_like(u_q), u_q)])

    for name, fs in mesh.faces.items():
        if not fs.size:
            continue
        u_o = _owner_trace(space, u, fs)
        u_n = _neighbor_trace(space, u, fs) if fs.is_interior else None
        u_hat = boundary.u_hat(t, *_boundary_points(space, fs)) if name in ("inflow", "outflow") else None
        trace = flux_S_Q(name, u_o, u_n, u_hat) * fs.weights(space)
        for i in range(2):
            _scatter_pair(space, rhs[i], trace * fs.normal[:, i : i + 1], fs)

    return mixed_mass(space, coefficients.inverse_diffusion), np.concatenate([rhs[0], rhs[1]], axis=1)


def solve_auxiliary_Q(
    state: HydroState,
    mesh: LayeredSliceMesh,
    coefficients: HydroCoefficients,
    boundary: HydroBoundaryData,
    t: float,
) -> np.ndarray:
    """Element-local LDG solve for Q = -D grad U; returns coefficients (2, n_elem, n_modes)."""
    matrix, rhs = _q_system(state, mesh, coefficients, boundary, t)
    return split_components(local_solve(matrix, rhs, "Q"))


def auxiliary_Q_residual(
    state: HydroState,
    mesh: LayeredSliceMesh,
    coefficients: HydroCoefficients,
    boundary: HydroBoundaryData,
    t: float,
) -> float:
    """Max-norm residual of the Q equation for the Q stored in ``state``."""
    matrix, rhs = _q_system(state, mesh, coefficients, boundary, t)
    q = np.concatenate([state.q.coeffs[0], state.q.coeffs[1]], axis=1)
    return float(np.max(np.abs(np.einsum("eab,eb->ea", matrix, q) - rhs)))


def _continuity_known_terms(
    u: DGField,
    w_order: int,
    mesh: LayeredSliceMesh,
    interface_flux: np.ndarray,
    boundary: HydroBoundaryData,
    t: float,
) -> np.ndarray:
    """All terms of the continuity equation that do not involve W, tested with σ."""
    space = mesh.freeflow_space(w_order)
    u_space = mesh.freeflow_space(u.order)
    flux = _check_interface(mesh, interface_flux, space)
    uc = u.scalar
    u_q = u_space.values(uc)
    known = -space.test_gradient(u_q, np.zeros_like(u_q))

    for name in ("lat", "inflow", "outflow"):
        fs = mesh.faces[name]
        if not fs.size:
            continue
        _scatter_pair(space, known, -lateral_volume_flux(name, fs, u_space, uc, boundary, t) * fs.weights(space), fs)

    bot = mesh.faces["bot"]
    space.scatter_face(known, flux * bot.weights(space), bot.owner, bot.owner_face)
    for name in ("horiz", "top"):
        fs = mesh.faces[name]
        if fs.size:
            nx, _ = _normals(fs)
            weighted = _owner_trace(u_space, uc, fs) * nx * fs.weights(space)
            space.scatter_face(known, weighted, fs.owner, fs.owner_face)
    return known


def solve_vertical_velocity(
    state: HydroState,
    mesh: LayeredSliceMesh,
    interface_flux: np.ndarray,
    boundary: HydroBoundaryData,
    t: float,
) -> np.ndarray:
    """Column sweep from the bathymetry upward for W; returns coefficients (n_elem, n_modes)."""
    space = mesh.freeflow_space(state.w.order)
    u_space = mesh.freeflow_space(state.u.order)
    known = _continuity_known_terms(state.u, state.w.order, mesh, interface_flux, boundary, t)

    # Outward top face of every element: horizontal face it owns, or the surface.
    top_scale = np.zeros(mesh.n_elements)
    for name in ("horiz", "top"):
        fs = mesh.faces[name]
        top_scale[fs.owner] = fs.normal[:, 1] * 0.5 * fs.length
    phi_top = space.face_phi[FACE_TOP]
    matrix = np.einsum("e,q,qb,qa->eab", top_scale, space.face_rule.weights, phi_top, phi_top)
    matrix -= np.einsum("eq,qb,eqa->eab", space.wdet, space.phi, space.grad_z)

    horiz = mesh.faces["horiz"]
    nx, nz = _normals(horiz)
    w = np.zeros((mesh.n_elements, space.n_modes))
    layer_of_neighbor = horiz.neighbor % mesh.layers
    for k in range(mesh.layers):
        idx = np.arange(mesh.n_columns) * mesh.layers + k
        rhs = -known[idx]
        if k > 0:
            sel = layer_of_neighbor == k
            below = horiz.owner[sel]
            un = u_space.trace(state.u.scalar, below, horiz.owner_face[sel]) * nx[sel]
            un = un + space.trace(w, below, horiz.owner_face[sel]) * nz[sel]
            contrib = np.zeros_like(known)
            space.scatter_face(contrib, un * horiz.weights(space)[sel], horiz.neighbor[sel], horiz.neighbor_face[sel])
            rhs = rhs + contrib[idx]
        w[idx] = local_solve(matrix[idx], rhs, "W")
    return w


def continuity_residual(
    state: HydroState,
    mesh: LayeredSliceMesh,
    interface_flux: np.ndarray,
    boundary: HydroBoundaryData,
    t: float,
) -> float:
    """Max-norm residual of the discrete continuity equation for the stored W."""
    space = mesh.freeflow_space(state.w.order)
    u_space = mesh.freeflow_space(state.u.order)
    res = _continuity_known_terms(state.u, state.w.order, mesh, interface_flux, boundary, t)
    w = state.w.scalar
    res -= np.einsum("eq,eqa->ea", space.wdet * space.values(w), space.grad_z)
    for name in ("horiz", "top"):
        fs = mesh.faces[name]
        if not fs.size:
            continue
        nx, nz = _normals(fs)
        ds = fs.weights(space)
        space.scatter_face(res, _owner_trace(space, w, fs) * nz * ds, fs.owner, fs.owner_face)
        if name == "horiz":
            below = _owner_trace(u_space, state.u.scalar, fs) * nx + _owner_trace(space, w, fs) * nz
            space.scatter_face(res, -below * ds, fs.neighbor, fs.neighbor_face)
    return float(np.max(np.abs(res)))
