"""
Layered xz-slice meshes for the free-flow and Darcy subdomains.

The free-flow block is a set of columns over a 1D surface mesh, each split into
``layers`` sigma layers between the bathymetry z_b and the smoothed surface Ξ_s.
The Darcy block uses the same columns between a flat base and z_b and never moves.
Element e of a block lives in column e // layers, layer e % layers (counted from
the bottom).
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from itertools import count
from pathlib import Path
from typing import TYPE_CHECKING, Literal

import numpy as np
import pandas as pd

from .dgcore import (
    FACE_BOTTOM,
    FACE_LEFT,
    FACE_RIGHT,
    FACE_TOP,
    DGField,
    LineSpace,
    QuadSpace,
    gauss_rule,
    get_basis,
)
from .errors import MeshError

if TYPE_CHECKING:
    from .config import RunConfig

logger = logging.getLogger(__name__)

NodeTag = Literal["inflow", "outflow"]
DarcySide = Literal["dirichlet", "neumann"]

FREEFLOW_CLASSES = ("lat", "horiz", "top", "bot", "inflow", "outflow")
DARCY_CLASSES = ("int", "dirichlet", "neumann", "top")

WET_DEPTH_TOLERANCE = 1e-12

_mesh_ids = count(1)


@dataclass(frozen=True)
class FaceGeometry:
    """One face seen from its owner element."""

    face_id: int
    owner: int
    neighbor: int | None
    normal: tuple[float, float]
    length: float
    face_class: str


@dataclass(frozen=True)
class FaceSet:
    """
    All faces of one class, stored as parallel arrays.

    Normals point out of the owner; ``neighbor`` is -1 on boundary faces. Both sides
    of a face are parametrised by the same s in [-1, 1], so face quadrature points
    coincide pairwise.
    """

    face_class: str
    owner: np.ndarray
    owner_face: np.ndarray
    neighbor: np.ndarray
    neighbor_face: np.ndarray
    normal: np.ndarray  # (nf, 2)
    length: np.ndarray  # (nf,)

    @property
    def size(self) -> int:
        return int(self.owner.shape[0])

    @property
    def is_interior(self) -> bool:
        return bool(self.size) and bool(np.all(self.neighbor >= 0))

    def weights(self, space: QuadSpace) -> np.ndarray:
        """Face quadrature weights including the length Jacobian, shape (nf, nqf)."""
        return space.face_rule.weights[None, :] * 0.5 * self.length[:, None]

    def geometry(self, index: int) -> FaceGeometry:
        nb = int(self.neighbor[index])
        return FaceGeometry(
            face_id=index,
            owner=int(self.owner[index]),
            neighbor=nb if nb >= 0 else None,
            normal=(float(self.normal[index, 0]), float(self.normal[index, 1])),
            length=float(self.length[index]),
            face_class=self.face_class,
        )


def _face_set(
    face_class: str,
    owner: list[int],
    owner_face: list[int],
    neighbor: list[int],
    neighbor_face: list[int],
    normal: list[tuple[float, float]],
    length: list[float],
) -> FaceSet:
    return FaceSet(
        face_class=face_class,
        owner=np.asarray(owner, dtype=int),
        owner_face=np.asarray(owner_face, dtype=int),
        neighbor=np.asarray(neighbor, dtype=int),
        neighbor_face=np.asarray(neighbor_face, dtype=int),
        normal=np.asarray(normal, dtype=float).reshape(-1, 2),
        length=np.asarray(length, dtype=float),
    )


@dataclass(frozen=True)
class SurfaceMesh1D:
    """Interval mesh of the projected domain; boundary nodes carry inflow/outflow tags."""

    nodes: np.ndarray
    elements: np.ndarray
    boundary_tags: dict[int, NodeTag]

    def __post_init__(self) -> None:
        if self.nodes.ndim != 1 or self.nodes.shape[0] < 2:
            raise MeshError("Surface mesh needs at least two nodes")
        if np.any(np.diff(self.nodes) <= 0.0):
            raise MeshError("Surface nodes must be strictly increasing")
        if self.elements.shape != (self.nodes.shape[0] - 1, 2):
            raise MeshError("Every surface element must have exactly two nodes")
        if set(self.boundary_tags) != {0, self.nodes.shape[0] - 1}:
            raise MeshError("Each boundary node needs exactly one tag")

    @classmethod
    def uniform(cls, x_min: float, x_max: float, n_elements: int, inflow_side: str = "left") -> "SurfaceMesh1D":
        if n_elements <= 0:
            raise MeshError(f"Column count must be positive, got {n_elements}")
        nodes = np.linspace(x_min, x_max, n_elements + 1)
        elements = np.stack([np.arange(n_elements), np.arange(1, n_elements + 1)], axis=1)
        tags: dict[int, NodeTag] = {0: "outflow", n_elements: "outflow"}
        if inflow_side == "left":
            tags[0] = "inflow"
        elif inflow_side == "right":
            tags[n_elements] = "inflow"
        return cls(nodes=nodes, elements=elements, boundary_tags=tags)

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    def space(self, order: int, quad_degree: int) -> LineSpace:
        return LineSpace(self.nodes[:-1], self.nodes[1:], order, gauss_rule(quad_degree, 1))


@dataclass
class LayeredSliceMesh:
    """Free-flow column mesh over a fixed Darcy block sharing the interface z = z_b(x)."""

    mesh_id: int
    surface: SurfaceMesh1D
    z_b: np.ndarray  # per surface node
    xi_s: np.ndarray  # per surface node
    layers: int
    column_z: np.ndarray  # (n_nodes, layers + 1)
    darcy_layers: int
    darcy_z: np.ndarray  # (n_nodes, darcy_layers + 1)
    faces: dict[str, FaceSet]
    darcy_faces: dict[str, FaceSet]
    quad_degree: int
    darcy_side_types: dict[str, DarcySide]
    _spaces: dict[int, QuadSpace] = field(default_factory=dict, repr=False)
    _surface_spaces: dict[int, LineSpace] = field(default_factory=dict, repr=False)
    _darcy_spaces: dict[int, QuadSpace] = field(default_factory=dict, repr=False)

    @property
    def n_columns(self) -> int:
        return self.surface.n_elements

    @property
    def n_elements(self) -> int:
        return self.n_columns * self.layers

    @property
    def n_darcy_elements(self) -> int:
        return self.n_columns * self.darcy_layers

    @property
    def element_column(self) -> np.ndarray:
        return np.arange(self.n_elements) // self.layers

    @property
    def darcy_element_column(self) -> np.ndarray:
        return np.arange(self.n_darcy_elements) // self.darcy_layers

    @property
    def bed_slope(self) -> np.ndarray:
        """dz_b/dx per column (z_b is linear on each column)."""
        return np.diff(self.z_b) / self.surface.h

    def surface_space(self, order: int) -> LineSpace:
        if order not in self._surface_spaces:
            self._surface_spaces[order] = self.surface.space(order, self.quad_degree)
        return self._surface_spaces[order]

    def freeflow_space(self, order: int) -> QuadSpace:
        if order not in self._spaces:
            self._spaces[order] = _block_space(self.surface.nodes, self.column_z, order, self.quad_degree)
        return self._spaces[order]

    def darcy_space(self, order: int) -> QuadSpace:
        if order not in self._darcy_spaces:
            self._darcy_spaces[order] = _block_space(self.surface.nodes, self.darcy_z, order, self.quad_degree)
        return self._darcy_spaces[order]

    def face_count(self) -> int:
        return sum(fs.size for fs in self.faces.values())

    def xi_s_at(self, x: np.ndarray) -> np.ndarray:
        """Piecewise-linear smoothed surface evaluated at arbitrary x."""
        return np.interp(x, self.surface.nodes, self.xi_s)


def _block_space(nodes: np.ndarray, levels: np.ndarray, order: int, quad_degree: int) -> QuadSpace:
    n_cols = nodes.shape[0] - 1
    n_layers = levels.shape[1] - 1
    col = np.repeat(np.arange(n_cols), n_layers)
    lay = np.tile(np.arange(n_layers), n_cols)
    return QuadSpace(
        x_left=nodes[col],
        x_right=nodes[col + 1],
        z_bl=levels[col, lay],
        z_br=levels[col + 1, lay],
        z_tl=levels[col, lay + 1],
        z_tr=levels[col + 1, lay + 1],
        order=order,
        rule=gauss_rule(quad_degree, 2),
    )


def _sloped_normal(h: float, dz: float, upward: bool) -> tuple[tuple[float, float], float]:
    length = float(np.hypot(h, dz))
    if upward:
        return (-dz / length, h / length), length
    return (dz / length, -h / length), length


def _column_faces(
    nodes: np.ndarray,
    levels: np.ndarray,
    left_class: str,
    right_class: str,
    top_class: str,
    bottom_class: str,
    interior_lateral: str,
    interior_horizontal: str,
) -> dict[str, FaceSet]:
    """Classify every face of a column block into named face sets."""
    n_cols = nodes.shape[0] - 1
    n_layers = levels.shape[1] - 1
    buckets: dict[str, tuple[list, list, list, list, list, list]] = {}

    def add(name: str, owner: int, lf: int, nb: int, nlf: int, normal: tuple[float, float], length: float) -> None:
        b = buckets.setdefault(name, ([], [], [], [], [], []))
        for lst, val in zip(b, (owner, lf, nb, nlf, normal, length), strict=True):
            lst.append(val)

    for c in range(n_cols):
        h = float(nodes[c + 1] - nodes[c])
        for k in range(n_layers):
            e = c * n_layers + k
            if k == 0:
                normal, length = _sloped_normal(h, float(levels[c + 1, 0] - levels[c, 0]), upward=False)
                add(bottom_class, e, FACE_BOTTOM, -1, -1, normal, length)
            if k == n_layers - 1:
                normal, length = _sloped_normal(h, float(levels[c + 1, k + 1] - levels[c, k + 1]), upward=True)
                add(top_class, e, FACE_TOP, -1, -1, normal, length)
            else:
                normal, length = _sloped_normal(h, float(levels[c + 1, k + 1] - levels[c, k + 1]), upward=True)
                add(interior_horizontal, e, FACE_TOP, e + 1, FACE_BOTTOM, normal, length)
            dz_right = float(levels[c + 1, k + 1] - levels[c + 1, k])
            if c < n_cols - 1:
                add(interior_lateral, e, FACE_RIGHT, e + n_layers, FACE_LEFT, (1.0, 0.0), dz_right)
            else:
                add(right_class, e, FACE_RIGHT, -1, -1, (1.0, 0.0), dz_right)
            if c == 0:
                add(left_class, e, FACE_LEFT, -1, -1, (-1.0, 0.0), float(levels[0, k + 1] - levels[0, k]))

    return {name: _face_set(name, *b) for name, b in buckets.items()}


def _freeflow_faces(surface: SurfaceMesh1D, column_z: np.ndarray) -> dict[str, FaceSet]:
    last = surface.nodes.shape[0] - 1
    faces = _column_faces(
        surface.nodes,
        column_z,
        left_class=surface.boundary_tags[0],
        right_class=surface.boundary_tags[last],
        top_class="top",
        bottom_class="bot",
        interior_lateral="lat",
        interior_horizontal="horiz",
    )
    empty = _face_set("", [], [], [], [], [], [])
    return {name: faces.get(name, replace(empty, face_class=name)) for name in FREEFLOW_CLASSES}


def _darcy_faces(nodes: np.ndarray, darcy_z: np.ndarray, sides: dict[str, DarcySide]) -> dict[str, FaceSet]:
    raw = _column_faces(
        nodes,
        darcy_z,
        left_class=f"side:{sides['left']}",
        right_class=f"side:{sides['right']}",
        top_class="top",
        bottom_class=f"base:{sides['bottom']}",
        interior_lateral="int:lat",
        interior_horizontal="int:horiz",
    )
    merged: dict[str, list[FaceSet]] = {name: [] for name in DARCY_CLASSES}
    for name, fs in raw.items():
        key = name.split(":")[-1] if not name.startswith("int") else "int"
        merged[key].append(fs)
    out: dict[str, FaceSet] = {}
    for name, parts in merged.items():
        if not parts:
            out[name] = _face_set(name, [], [], [], [], [], [])
            continue
        out[name] = FaceSet(
            face_class=name,
            owner=np.concatenate([p.owner for p in parts]),
            owner_face=np.concatenate([p.owner_face for p in parts]),
            neighbor=np.concatenate([p.neighbor for p in parts]),
            neighbor_face=np.concatenate([p.neighbor_face for p in parts]),
            normal=np.concatenate([p.normal for p in parts]),
            length=np.concatenate([p.length for p in parts]),
        )
    return out


def _sigma_levels(z_b: np.ndarray, top: np.ndarray, layers: int) -> np.ndarray:
    frac = np.arange(layers + 1) / layers
    return z_b[:, None] + frac[None, :] * (top - z_b)[:, None]


def _check_wet(z_b: np.ndarray, xi_s: np.ndarray, z_bottom: float) -> None:
    depth = xi_s - z_b
    height = float(np.max(xi_s) - z_bottom)
    if np.any(depth <= 0.0):
        node = int(np.argmin(depth))
        raise MeshError(f"Free surface at or below bathymetry at node {node} (depth {depth[node]:.3e})")
    if np.any(depth < WET_DEPTH_TOLERANCE * height):
        raise MeshError(f"Degenerate wet depth {float(np.min(depth)):.3e}")


def build_layered_mesh(
    config: "RunConfig",
    elevation: Callable[[np.ndarray], np.ndarray] | np.ndarray | DGField,
) -> LayeredSliceMesh:
    """
    Build the coupled slice mesh for a run configuration.

    ``elevation`` is the initial surface: a function of x, nodal values, or a surface
    DGField (which is smoothed without inflow forcing).
    """
    layers = config.resolved_layers()
    darcy_layers = config.resolved_darcy_layers()
    if layers <= 0 or darcy_layers <= 0:
        raise MeshError(f"Layer counts must be positive, got {layers} free-flow / {darcy_layers} Darcy")
    surface = SurfaceMesh1D.uniform(config.x_min, config.x_max, config.resolved_columns(), config.inflow_side)
    z_b = config.bathymetry(surface.nodes)
    if isinstance(elevation, DGField):
        xi_s = smooth_free_surface(elevation, surface, None)
    elif callable(elevation):
        xi_s = np.asarray(elevation(surface.nodes), dtype=float) * np.ones_like(surface.nodes)
    else:
        xi_s = np.asarray(elevation, dtype=float)
    if np.any(z_b <= config.z_bottom):
        raise MeshError(f"Bathymetry must lie above the Darcy base z = {config.z_bottom}")
    _check_wet(z_b, xi_s, config.z_bottom)

    column_z = _sigma_levels(z_b, xi_s, layers)
    darcy_z = _sigma_levels(np.full_like(z_b, config.z_bottom), z_b, darcy_layers)
    sides = config.darcy_side_types()
    mesh = LayeredSliceMesh(
        mesh_id=next(_mesh_ids),
        surface=surface,
        z_b=z_b,
        xi_s=xi_s,
        layers=layers,
        column_z=column_z,
        darcy_layers=darcy_layers,
        darcy_z=darcy_z,
        faces=_freeflow_faces(surface, column_z),
        darcy_faces=_darcy_faces(surface.nodes, darcy_z, sides),
        quad_degree=config.quad_degree(),
        darcy_side_types=sides,
    )
    logger.info(
        f"Built mesh {mesh.mesh_id}: {surface.n_elements} columns x {layers} layers free flow, "
        f"{darcy_layers} Darcy layers, {mesh.face_count()} free-flow faces"
    )
    return mesh


def surface_traces(xi: DGField) -> tuple[np.ndarray, np.ndarray]:
    """Left and right end values of a surface field on every element."""
    basis = get_basis(1, xi.order)
    ends = basis.values(np.array([-1.0, 1.0]))
    vals = xi.scalar @ ends.T
    return vals[:, 0], vals[:, 1]


def smooth_free_surface(xi: DGField, surface: SurfaceMesh1D, inflow_value: float | None) -> np.ndarray:
    """
    Continuous piecewise-linear surface from the discontinuous elevation.

    Interior nodes take the mean of the two adjacent traces; an inflow node takes
    ``inflow_value`` when given; other boundary nodes take the adjacent trace. The
    coefficients of ``xi`` are left untouched.
    """
    left, right = surface_traces(xi)
    nodal = np.empty(surface.nodes.shape[0])
    nodal[1:-1] = 0.5 * (right[:-1] + left[1:])
    nodal[0] = left[0]
    nodal[-1] = right[-1]
    if inflow_value is not None:
        for node, tag in surface.boundary_tags.items():
            if tag == "inflow":
                nodal[node] = inflow_value
    return nodal


def move_mesh(mesh: LayeredSliceMesh, xi_s: np.ndarray) -> LayeredSliceMesh:
    """Redistribute the free-flow sigma layers under a new smoothed surface."""
    xi_s = np.asarray(xi_s, dtype=float)
    _check_wet(mesh.z_b, xi_s, float(mesh.darcy_z[0, 0]))
    column_z = _sigma_levels(mesh.z_b, xi_s, mesh.layers)
    return LayeredSliceMesh(
        mesh_id=mesh.mesh_id,
        surface=mesh.surface,
        z_b=mesh.z_b,
        xi_s=xi_s,
        layers=mesh.layers,
        column_z=column_z,
        darcy_layers=mesh.darcy_layers,
        darcy_z=mesh.darcy_z,
        faces=_freeflow_faces(mesh.surface, column_z),
        darcy_faces=mesh.darcy_faces,
        quad_degree=mesh.quad_degree,
        darcy_side_types=mesh.darcy_side_types,
        _surface_spaces=mesh._surface_spaces,
        _darcy_spaces=mesh._darcy_spaces,
    )


def _face_endpoints(levels: np.ndarray, nodes: np.ndarray, n_layers: int, fs: FaceSet) -> np.ndarray:
    """(x0, z0, x1, z1) of every face in a set."""
    out = np.empty((fs.size, 4))
    for i, (e, lf) in enumerate(zip(fs.owner, fs.owner_face, strict=True)):
        c, k = divmod(int(e), n_layers)
        if lf in (FACE_BOTTOM, FACE_TOP):
            lvl = k if lf == FACE_BOTTOM else k + 1
            out[i] = (nodes[c], levels[c, lvl], nodes[c + 1], levels[c + 1, lvl])
        else:
            node = c + 1 if lf == FACE_RIGHT else c
            out[i] = (nodes[node], levels[node, k], nodes[node], levels[node, k + 1])
    return out


def dump_mesh_csv(mesh: LayeredSliceMesh, directory: Path) -> tuple[Path, Path]:
    """Write element corners and classified faces of both blocks as CSV files."""
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for block, levels, n_layers in (("freeflow", mesh.column_z, mesh.layers), ("darcy", mesh.darcy_z, mesh.darcy_layers)):
        for e in range(mesh.n_columns * n_layers):
            c, k = divmod(e, n_layers)
            rows.append(
                {
                    "block": block,
                    "element": e,
                    "column": c,
                    "layer": k,
                    "x_left": mesh.surface.nodes[c],
                    "x_right": mesh.surface.nodes[c + 1],
                    "z_bl": levels[c, k],
                    "z_br": levels[c + 1, k],
                    "z_tl": levels[c, k + 1],
                    "z_tr": levels[c + 1, k + 1],
                }
            )
    elements_path = directory / "mesh_elements.csv"
    pd.DataFrame(rows).to_csv(elements_path, index=False)

    frames = []
    for block, faces, levels, n_layers in (
        ("freeflow", mesh.faces, mesh.column_z, mesh.layers),
        ("darcy", mesh.darcy_faces, mesh.darcy_z, mesh.darcy_layers),
    ):
        for name, fs in faces.items():
            if not fs.size:
                continue
            ends = _face_endpoints(levels, mesh.surface.nodes, n_layers, fs)
            frames.append(
                pd.DataFrame(
                    {
                        "block": block,
                        "face_class": name,
                        "owner": fs.owner,
                        "neighbor": fs.neighbor,
                        "normal_x": fs.normal[:, 0],
                        "normal_z": fs.normal[:, 1],
                        "length": fs.length,
                        "x0": ends[:, 0],
                        "z0": ends[:, 1],
                        "x1": ends[:, 2],
                        "z1": ends[:, 3],
                    }
                )
            )
    faces_path = directory / "mesh_faces.csv"
    pd.concat(frames, ignore_index=True).to_csv(faces_path, index=False)
    logger.debug(f"Mesh {mesh.mesh_id} written to {elements_path} and {faces_path}")
    return elements_path, faces_path
