"""
Mixed LDG discretisation of the Darcy system with interior-penalty head stabilisation.

Unknowns are the hydraulic head H̃ and the seepage velocity Ũ = -D̃ grad H̃ on the
fixed Darcy block. The top faces of the block are the interface with the free flow:
there the head trace is the dynamic head supplied by the coupling and the normal flux
is the single-valued interface flux.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .dgcore import DGField, QuadSpace, local_solve, mixed_mass, split_components
from .errors import ConfigError, SolveError
from .mesh import FaceSet, LayeredSliceMesh

logger = logging.getLogger(__name__)

PointFn = Callable[..., np.ndarray]


@dataclass
class DarcyState:
    """Head H̃ and seepage velocity Ũ (two components) on the Darcy mesh."""

    head: DGField
    flux: DGField

    def copy(self) -> "DarcyState":
        return DarcyState(self.head.copy(), self.flux.copy())


def _zero_head(t: float, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


def _no_flow(t: float, x: np.ndarray, z: np.ndarray, nx: np.ndarray, nz: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


@dataclass(frozen=True)
class DarcyCoefficients:
    """D̃, penalty η and the data ĥ (Dirichlet), û_ñ (Neumann) and f̃ (source)."""

    conductivity: np.ndarray = field(default_factory=lambda: 0.01 * np.eye(2))
    penalty: float = 1.0
    source: PointFn | None = None  # (t, x, z) -> f̃
    head_bc: PointFn = _zero_head  # (t, x, z) -> ĥ
    normal_flux_bc: PointFn = _no_flow  # (t, x, z, nx, nz) -> û_ñ

    def __post_init__(self) -> None:
        d = np.asarray(self.conductivity, dtype=float)
        if d.shape != (2, 2) or not np.allclose(d, d.T) or np.any(np.linalg.eigvalsh(d) <= 0.0):
            raise ConfigError(f"Conductivity must be a symmetric positive definite 2x2 tensor, got {d.tolist()}")
        if self.penalty <= 0.0:
            raise ConfigError(f"Penalty must be positive, got {self.penalty}")

    @property
    def inverse_conductivity(self) -> np.ndarray:
        return np.linalg.inv(self.conductivity)


def _scatter_pair(space: QuadSpace, out: np.ndarray, weighted: np.ndarray, fs: FaceSet) -> None:
    space.scatter_face(out, -weighted, fs.owner, fs.owner_face)
    if fs.is_interior:
        space.scatter_face(out, weighted, fs.neighbor, fs.neighbor_face)


def _require_top(mesh: LayeredSliceMesh, values: np.ndarray | None, space: QuadSpace, what: str) -> np.ndarray:
    expected = (mesh.darcy_faces["top"].size, space.face_rule.size)
    if values is None:
        raise SolveError(f"The interface {what} on the Darcy top faces is required")
    if values.shape != expected:
        raise SolveError(f"Interface {what} has shape {values.shape}, expected {expected}")
    return values


def head_traces(
    state: DarcyState, mesh: LayeredSliceMesh, coefficients: DarcyCoefficients, interface_head: np.ndarray, t: float
) -> dict[str, np.ndarray]:
    """Single-valued head trace Ĥ on every Darcy face class."""
    space = mesh.darcy_space(state.head.order)
    h = state.head.scalar
    out: dict[str, np.ndarray] = {}
    for name, fs in mesh.darcy_faces.items():
        if not fs.size:
            continue
        h_o = space.trace(h, fs.owner, fs.owner_face)
        if name == "int":
            out[name] = 0.5 * (h_o + space.trace(h, fs.neighbor, fs.neighbor_face))
        elif name == "top":
            out[name] = interface_head
        elif name == "neumann":
            out[name] = h_o
        else:
            out[name] = coefficients.head_bc(t, *space.face_points(fs.owner, fs.owner_face))
    return out


def _flux_system(
    state: DarcyState, mesh: LayeredSliceMesh, coefficients: DarcyCoefficients, interface_head: np.ndarray, t: float
) -> tuple[np.ndarray, np.ndarray]:
    space = mesh.darcy_space(state.flux.order)
    h_space = mesh.darcy_space(state.head.order)
    interface_head = _require_top(mesh, interface_head, space, "head")
    h_q = h_space.values(state.head.scalar)
    zero = np.zeros_like(h_q)
    rhs = np.stack([space.test_gradient(h_q, zero), space.test_gradient(zero, h_q)])
    for name, trace in head_traces(state, mesh, coefficients, interface_head, t).items():
        fs = mesh.darcy_faces[name]
        weighted = trace * fs.weights(space)
        for i in range(2):
            _scatter_pair(space, rhs[i], weighted * fs.normal[:, i : i + 1], fs)
    matrix = mixed_mass(space, coefficients.inverse_conductivity)
    return matrix, np.concatenate([rhs[0], rhs[1]], axis=1)


def solve_darcy_flux(
    state: DarcyState, mesh: LayeredSliceMesh, coefficients: DarcyCoefficients, interface_head: np.ndarray, t: float
) -> np.ndarray:
    """Element-local solve for Ũ; ``interface_head`` is the dynamic head at top-face points."""
    matrix, rhs = _flux_system(state, mesh, coefficients, interface_head, t)
    return split_components(local_solve(matrix, rhs, "Darcy velocity"))


def darcy_flux_residual(
    state: DarcyState, mesh: LayeredSliceMesh, coefficients: DarcyCoefficients, interface_head: np.ndarray, t: float
) -> float:
    matrix, rhs = _flux_system(state, mesh, coefficients, interface_head, t)
    flux = np.concatenate([state.flux.coeffs[0], state.flux.coeffs[1]], axis=1)
    return float(np.max(np.abs(np.einsum("eab,eb->ea", matrix, flux) - rhs)))


def darcy_face_fluxes(
    state: DarcyState,
    mesh: LayeredSliceMesh,
    coefficients: DarcyCoefficients,
    interface_flux: np.ndarray,
    t: float,
) -> dict[str, np.ndarray]:
    """Normal flux plus penalty per face class, oriented with the owner normal."""
    space = mesh.darcy_space(state.head.order)
    u_space = mesh.darcy_space(state.flux.order)
    h = state.head.scalar
    ux, uz = state.flux.coeffs[0], state.flux.coeffs[1]
    eta = coefficients.penalty
    out: dict[str, np.ndarray] = {}
    for name, fs in mesh.darcy_faces.items():
        if not fs.size:
            continue
        nx, nz = fs.normal[:, 0:1], fs.normal[:, 1:2]
        un_o = u_space.trace(ux, fs.owner, fs.owner_face) * nx + u_space.trace(uz, fs.owner, fs.owner_face) * nz
        h_o = space.trace(h, fs.owner, fs.owner_face)
        scale = eta / fs.length[:, None]
        if name == "int":
            un_n = u_space.trace(ux, fs.neighbor, fs.neighbor_face) * nx + u_space.trace(uz, fs.neighbor, fs.neighbor_face) * nz
            out[name] = 0.5 * (un_o + un_n) + scale * (h_o - space.trace(h, fs.neighbor, fs.neighbor_face))
        elif name == "dirichlet":
            h_hat = coefficients.head_bc(t, *space.face_points(fs.owner, fs.owner_face))
            out[name] = un_o + scale * (h_o - h_hat)
        elif name == "neumann":
            xb, zb = space.face_points(fs.owner, fs.owner_face)
            out[name] = np.broadcast_to(coefficients.normal_flux_bc(t, xb, zb, nx, nz), xb.shape)
        else:
            # Darcy top normal is the negated free-flow bottom normal.
            out[name] = -interface_flux
    return out


def assemble_darcy_head_rhs(
    state: DarcyState,
    mesh: LayeredSliceMesh,
    coefficients: DarcyCoefficients,
    interface_flux: np.ndarray,
    t: float,
) -> np.ndarray:
    """∂_t H̃ coefficients; ``interface_flux`` is Ũ·n in free-flow orientation on the interface."""
    space = mesh.darcy_space(state.head.order)
    u_space = mesh.darcy_space(state.flux.order)
    interface_flux = _require_top(mesh, interface_flux, space, "flux")
    rhs = space.test_gradient(u_space.values(state.flux.coeffs[0]), u_space.values(state.flux.coeffs[1]))
    if coefficients.source is not None:
        rhs += space.test(np.broadcast_to(coefficients.source(t, space.x, space.z), space.x.shape))
    for name, flux in darcy_face_fluxes(state, mesh, coefficients, interface_flux, t).items():
        fs = mesh.darcy_faces[name]
        _scatter_pair(space, rhs, flux * fs.weights(space), fs)
    return space.solve_mass(rhs)
