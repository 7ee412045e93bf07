"""
Polynomial bases, quadrature and element-level DG algebra.

Everything here works on dense per-element coefficient arrays. Quadrilateral
elements are trapezoids with vertical lateral edges, mapped bilinearly from the
reference square [-1, 1]^2; surface elements are intervals mapped affinely from
[-1, 1]. Bases are orthonormal Legendre products on the reference element, so the
reference mass matrix is the identity; physical mass matrices are assembled by
quadrature whenever the geometry changes.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np
from numpy.polynomial import legendre

from .errors import MeshError, SolveError

logger = logging.getLogger(__name__)

Component = Literal["surface", "freeflow", "darcy"]
JumpKind = Literal["scalar", "vector"]

# Reference coordinates of the four local faces of the reference square:
# 0 = bottom (eta=-1), 1 = right (xi=1), 2 = top (eta=1), 3 = left (xi=-1).
FACE_BOTTOM, FACE_RIGHT, FACE_TOP, FACE_LEFT = 0, 1, 2, 3


@dataclass(frozen=True)
class QuadRule:
    """Gauss-Legendre rule on the reference interval or square."""

    points: np.ndarray  # (nq,) for dim 1, (nq, 2) for dim 2
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])


@lru_cache(maxsize=None)
def gauss_rule(degree: int, dim: int = 1) -> QuadRule:
    """Tensor Gauss-Legendre rule exact for polynomials of the given degree per direction."""
    n = degree // 2 + 1
    pts, wts = legendre.leggauss(n)
    if dim == 1:
        return QuadRule(points=pts, weights=wts, degree=degree)
    if dim == 2:
        xi = np.repeat(pts, n)
        eta = np.tile(pts, n)
        return QuadRule(points=np.stack([xi, eta], axis=1), weights=np.repeat(wts, n) * np.tile(wts, n), degree=degree)
    raise ValueError(f"Unsupported quadrature dimension: {dim}")


def _legendre_table(order: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Legendre values and derivatives, shape (len(x), order+1) each."""
    x = np.asarray(x, dtype=float)
    scale = np.sqrt((2.0 * np.arange(order + 1) + 1.0) / 2.0)
    vals = legendre.legvander(x, order) * scale
    ders = np.empty_like(vals)
    for n in range(order + 1):
        unit = np.zeros(order + 1)
        unit[n] = scale[n]
        ders[:, n] = legendre.legval(x, legendre.legder(unit)) if n > 0 else 0.0
    return vals, ders


@dataclass(frozen=True)
class Basis:
    """Orthonormal modal basis of order k: Legendre on [-1, 1], tensor products on [-1, 1]^2."""

    dim: int
    order: int

    @property
    def n_modes(self) -> int:
        return (self.order + 1) ** self.dim

    def values(self, points: np.ndarray) -> np.ndarray:
        """Basis values at reference points, shape (nq, n_modes)."""
        if self.dim == 1:
            return _legendre_table(self.order, np.atleast_1d(points))[0]
        pts = np.atleast_2d(points)
        vx, _ = _legendre_table(self.order, pts[:, 0])
        vz, _ = _legendre_table(self.order, pts[:, 1])
        return np.einsum("qa,qb->qab", vx, vz).reshape(pts.shape[0], -1)

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Reference gradients, shape (nq, n_modes, dim)."""
        if self.dim == 1:
            return _legendre_table(self.order, np.atleast_1d(points))[1][:, :, None]
        pts = np.atleast_2d(points)
        vx, dx = _legendre_table(self.order, pts[:, 0])
        vz, dz = _legendre_table(self.order, pts[:, 1])
        gxi = np.einsum("qa,qb->qab", dx, vz).reshape(pts.shape[0], -1)
        geta = np.einsum("qa,qb->qab", vx, dz).reshape(pts.shape[0], -1)
        return np.stack([gxi, geta], axis=-1)


@lru_cache(maxsize=None)
def get_basis(dim: int, order: int) -> Basis:
    if order < 0:
        raise ValueError(f"Polynomial order must be non-negative, got {order}")
    return Basis(dim=dim, order=order)


def reference_mass_matrix(basis: Basis, rule: QuadRule) -> np.ndarray:
    phi = basis.values(rule.points)
    return np.einsum("q,qa,qb->ab", rule.weights, phi, phi)


def reference_face_points(local_face: int, s: np.ndarray) -> np.ndarray:
    """Map face parameter s in [-1, 1] to reference coordinates on a local face."""
    one = np.ones_like(s)
    if local_face == FACE_BOTTOM:
        return np.stack([s, -one], axis=1)
    if local_face == FACE_RIGHT:
        return np.stack([one, s], axis=1)
    if local_face == FACE_TOP:
        return np.stack([s, one], axis=1)
    if local_face == FACE_LEFT:
        return np.stack([-one, s], axis=1)
    raise ValueError(f"Unknown local face {local_face}")


def face_xi(local_face: int, s: np.ndarray) -> np.ndarray:
    """Horizontal reference coordinate of face points (used to evaluate column fields)."""
    return reference_face_points(local_face, s)[:, 0]


@dataclass
class DGField:
    """Modal coefficients of one unknown; ``coeffs`` has shape (n_comp, n_elem, n_modes)."""

    name: str
    order: int
    coeffs: np.ndarray
    mesh_id: int
    component: Component

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim == 2:
            self.coeffs = self.coeffs[None, :, :]
        dim = 1 if self.component == "surface" else 2
        expected = get_basis(dim, self.order).n_modes
        if self.coeffs.ndim != 3 or self.coeffs.shape[2] != expected:
            raise ValueError(
                f"Field '{self.name}' of order {self.order} needs {expected} modes per element, "
                f"got coefficient array of shape {self.coeffs.shape}"
            )

    @property
    def n_comp(self) -> int:
        return int(self.coeffs.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.coeffs.shape[1])

    @property
    def scalar(self) -> np.ndarray:
        """Coefficients of the first (or only) component, shape (n_elem, n_modes)."""
        return self.coeffs[0]

    def copy(self) -> "DGField":
        return DGField(self.name, self.order, self.coeffs.copy(), self.mesh_id, self.component)

    def with_coeffs(self, coeffs: np.ndarray) -> "DGField":
        return DGField(self.name, self.order, coeffs, self.mesh_id, self.component)


def eval_field(field_: DGField, element: int, point: np.ndarray | float) -> np.ndarray | float:
    """Evaluate a field at one reference point of one element."""
    if element < 0 or element >= field_.n_elements:
        raise MeshError(f"Unknown element id {element} for field '{field_.name}'")
    dim = 1 if field_.component == "surface" else 2
    phi = get_basis(dim, field_.order).values(np.asarray(point, dtype=float).reshape(1, -1) if dim == 2 else point)
    values = field_.coeffs[:, element, :] @ phi[0]
    return float(values[0]) if field_.n_comp == 1 else values


def jump_avg(a: np.ndarray, b: np.ndarray, normal: np.ndarray, kind: JumpKind = "scalar") -> tuple[np.ndarray, np.ndarray]:
    """
    Average and jump of two traces across a face.

    ``normal`` is the unit normal of the first trace's element; the second element's
    normal is its negative. For scalar traces the jump is a vector along the normal,
    for vector traces (last axis = dimension) the jump is a scalar.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    normal = np.asarray(normal, dtype=float)
    avg = 0.5 * (a + b)
    if kind == "scalar":
        jump = (a - b)[..., None] * normal
    else:
        jump = np.sum((a - b) * normal, axis=-1)
    return avg, jump


def eoc(err_coarse: float, err_fine: float, dx_coarse: float, dx_fine: float) -> float:
    """Estimated order of convergence between two refinement levels."""
    if min(err_coarse, err_fine, dx_coarse, dx_fine) <= 0.0:
        raise ValueError(
            f"EOC needs positive inputs, got errors ({err_coarse}, {err_fine}) and sizes ({dx_coarse}, {dx_fine})"
        )
    return math.log(err_coarse / err_fine) / math.log(dx_coarse / dx_fine)


@dataclass
class LineSpace:
    """DG space on intervals [x_left, x_right] (the surface mesh)."""

    x_left: np.ndarray
    x_right: np.ndarray
    order: int
    rule: QuadRule
    basis: Basis = field(init=False)
    phi: np.ndarray = field(init=False, repr=False)
    x: np.ndarray = field(init=False, repr=False)
    wdet: np.ndarray = field(init=False, repr=False)
    mass: np.ndarray = field(init=False, repr=False)
    inv_mass: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.basis = get_basis(1, self.order)
        self.phi = self.basis.values(self.rule.points)
        h = (self.x_right - self.x_left)[:, None]
        if np.any(h <= 0.0):
            raise MeshError("Surface elements must have positive length")
        self.x = self.x_left[:, None] + 0.5 * (1.0 + self.rule.points[None, :]) * h
        self.wdet = self.rule.weights[None, :] * 0.5 * h
        self.mass = np.einsum("eq,qa,qb->eab", self.wdet, self.phi, self.phi)
        self.inv_mass = np.linalg.inv(self.mass)

    @property
    def n_elements(self) -> int:
        return int(self.x_left.shape[0])

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    def coordinates(self) -> tuple[np.ndarray, ...]:
        return (self.x,)

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs @ self.phi.T

    def test(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("eq,eq,qa->ea", self.wdet, values, self.phi)

    def solve_mass(self, rhs: np.ndarray) -> np.ndarray:
        return np.einsum("eab,eb->ea", self.inv_mass, rhs)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.wdet * values))

    def project(self, func: Callable[..., np.ndarray]) -> np.ndarray:
        return self.solve_mass(self.test(np.broadcast_to(func(self.x), self.x.shape)))


@dataclass
class QuadSpace:
    """
    DG space on trapezoids with vertical lateral edges.

    Element e spans x in [x_left, x_right]; its bottom and top edges are straight
    lines between (x_left, z_bl)-(x_right, z_br) and (x_left, z_tl)-(x_right, z_tr).
    """

    x_left: np.ndarray
    x_right: np.ndarray
    z_bl: np.ndarray
    z_br: np.ndarray
    z_tl: np.ndarray
    z_tr: np.ndarray
    order: int
    rule: QuadRule
    basis: Basis = field(init=False)
    phi: np.ndarray = field(init=False, repr=False)
    x: np.ndarray = field(init=False, repr=False)
    z: np.ndarray = field(init=False, repr=False)
    wdet: np.ndarray = field(init=False, repr=False)
    grad_x: np.ndarray = field(init=False, repr=False)
    grad_z: np.ndarray = field(init=False, repr=False)
    mass: np.ndarray = field(init=False, repr=False)
    inv_mass: np.ndarray = field(init=False, repr=False)
    face_rule: QuadRule = field(init=False, repr=False)
    face_phi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.basis = get_basis(2, self.order)
        pts = self.rule.points
        self.phi = self.basis.values(pts)
        dphi = self.basis.gradients(pts)
        xi = pts[None, :, 0]
        eta = pts[None, :, 1]
        col = lambda a: np.asarray(a, dtype=float)[:, None]  # noqa: E731
        h = col(self.x_right) - col(self.x_left)
        bottom = col(self.z_bl) + 0.5 * (1.0 + xi) * (col(self.z_br) - col(self.z_bl))
        top = col(self.z_tl) + 0.5 * (1.0 + xi) * (col(self.z_tr) - col(self.z_tl))
        self.x = col(self.x_left) + 0.5 * (1.0 + xi) * h
        self.z = bottom + 0.5 * (1.0 + eta) * (top - bottom)
        x_xi = 0.5 * h
        z_xi = 0.5 * (col(self.z_br) - col(self.z_bl)) + 0.25 * (1.0 + eta) * (
            (col(self.z_tr) - col(self.z_tl)) - (col(self.z_br) - col(self.z_bl))
        )
        z_eta = 0.5 * (top - bottom)
        det = x_xi * z_eta
        if np.any(det <= 0.0):
            raise MeshError("Degenerate or inverted quadrilateral element")
        self.wdet = self.rule.weights[None, :] * det
        # d/dx = d/dxi / x_xi - z_xi / det * d/deta ; d/dz = d/deta / z_eta
        self.grad_x = dphi[None, :, :, 0] / x_xi[:, :, None] - (z_xi / det)[:, :, None] * dphi[None, :, :, 1]
        self.grad_z = dphi[None, :, :, 1] / z_eta[:, :, None]
        self.mass = np.einsum("eq,qa,qb->eab", self.wdet, self.phi, self.phi)
        self.inv_mass = np.linalg.inv(self.mass)
        self.face_rule = gauss_rule(self.rule.degree, 1)
        s = self.face_rule.points
        self.face_phi = np.stack([self.basis.values(reference_face_points(lf, s)) for lf in range(4)])

    @property
    def n_elements(self) -> int:
        return int(self.wdet.shape[0])

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    def coordinates(self) -> tuple[np.ndarray, ...]:
        return (self.x, self.z)

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        """Values at element quadrature points, shape (n_elem, nq)."""
        return coeffs @ self.phi.T

    def gradient(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.einsum("ea,eqa->eq", coeffs, self.grad_x), np.einsum("ea,eqa->eq", coeffs, self.grad_z)

    def test(self, values: np.ndarray) -> np.ndarray:
        """(v, phi_a)_K for every element and mode."""
        return np.einsum("eq,eq,qa->ea", self.wdet, values, self.phi)

    def test_gradient(self, vx: np.ndarray, vz: np.ndarray) -> np.ndarray:
        """(v, grad phi_a)_K for a vector v = (vx, vz)."""
        return np.einsum("eq,eqa->ea", self.wdet * vx, self.grad_x) + np.einsum("eq,eqa->ea", self.wdet * vz, self.grad_z)

    def weighted_mass(self, weight: np.ndarray) -> np.ndarray:
        """Mass matrices with a pointwise weight, shape (n_elem, nm, nm)."""
        return np.einsum("eq,qa,qb->eab", self.wdet * weight, self.phi, self.phi)

    def solve_mass(self, rhs: np.ndarray) -> np.ndarray:
        return np.einsum("eab,eb->ea", self.inv_mass, rhs)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.wdet * values))

    def project(self, func: Callable[..., np.ndarray]) -> np.ndarray:
        return self.solve_mass(self.test(np.broadcast_to(func(self.x, self.z), self.x.shape)))

    def trace(self, coeffs: np.ndarray, elements: np.ndarray, local_faces: np.ndarray) -> np.ndarray:
        """Traces at face quadrature points, shape (n_faces, nqf)."""
        return np.einsum("fm,fqm->fq", coeffs[elements], self.face_phi[local_faces])

    def scatter_face(self, out: np.ndarray, weighted: np.ndarray, elements: np.ndarray, local_faces: np.ndarray) -> None:
        """Add <v, phi_a> (v already multiplied by face weights) into ``out`` in place."""
        np.add.at(out, elements, np.einsum("fq,fqm->fm", weighted, self.face_phi[local_faces]))

    def face_points(self, elements: np.ndarray, local_faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates of face quadrature points."""
        s = self.face_rule.points
        ref = np.stack([reference_face_points(lf, s) for lf in range(4)])[local_faces]
        xi, eta = ref[..., 0], ref[..., 1]
        e = elements
        h = (self.x_right - self.x_left)[e][:, None]
        x = self.x_left[e][:, None] + 0.5 * (1.0 + xi) * h
        bottom = self.z_bl[e][:, None] + 0.5 * (1.0 + xi) * (self.z_br - self.z_bl)[e][:, None]
        top = self.z_tl[e][:, None] + 0.5 * (1.0 + xi) * (self.z_tr - self.z_tl)[e][:, None]
        return x, bottom + 0.5 * (1.0 + eta) * (top - bottom)


def mixed_mass(space: QuadSpace, inverse_tensor: np.ndarray) -> np.ndarray:
    """Block matrices of (A v, ψ) for vector fields with a constant 2x2 tensor A, shape (n_elem, 2nm, 2nm)."""
    nm = space.n_modes
    matrix = np.zeros((space.n_elements, 2 * nm, 2 * nm))
    for i in range(2):
        for j in range(2):
            matrix[:, i * nm : (i + 1) * nm, j * nm : (j + 1) * nm] = inverse_tensor[i, j] * space.mass
    return matrix


def split_components(stacked: np.ndarray) -> np.ndarray:
    """(n_elem, 2nm) -> (2, n_elem, nm)."""
    nm = stacked.shape[1] // 2
    return np.stack([stacked[:, :nm], stacked[:, nm:]])


def local_solve(matrices: np.ndarray, rhs: np.ndarray, label: str) -> np.ndarray:
    """Batched dense solve with a singularity guard."""
    cond = np.linalg.cond(matrices)
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e14):
        raise SolveError(f"Singular local system while solving for {label} (max cond {np.max(cond):.3e})")
    return np.linalg.solve(matrices, rhs[..., None])[..., 0]


def project_l2(
    func: Callable[..., np.ndarray],
    space: LineSpace | QuadSpace,
    name: str = "f",
    component: Component = "freeflow",
    mesh_id: int = 0,
) -> DGField:
    """Element-wise L2 projection of a pointwise function onto ``space``."""
    return DGField(name, space.order, space.project(func), mesh_id, component)


def l2_error(coeffs: np.ndarray, exact: Callable[..., np.ndarray], space: LineSpace | QuadSpace) -> float:
    """L2 norm of (field - exact) over the space's domain, computed by quadrature."""
    coords = space.coordinates()
    diff = space.values(coeffs) - np.broadcast_to(exact(*coords), coords[0].shape)
    return math.sqrt(max(space.integrate(diff * diff), 0.0))
