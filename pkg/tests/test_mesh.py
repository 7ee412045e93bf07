import numpy as np
import pandas as pd
import pytest

from ldgcouple.checks._support import constant, slice_mesh, small_config
from ldgcouple.dgcore import FACE_BOTTOM, FACE_TOP, DGField
from ldgcouple.errors import MeshError
from ldgcouple.mesh import SurfaceMesh1D, build_layered_mesh, dump_mesh_csv, move_mesh, smooth_free_surface


@pytest.mark.parametrize(
    "side,tags",
    [
        ("left", {0: "inflow", 4: "outflow"}),
        ("right", {0: "outflow", 4: "inflow"}),
        ("none", {0: "outflow", 4: "outflow"}),
    ],
)
def test_uniform_surface_tags(side, tags):
    surface = SurfaceMesh1D.uniform(0.0, 4.0, 4, side)
    assert surface.boundary_tags == tags
    np.testing.assert_allclose(surface.h, 1.0)


def test_surface_mesh_invariants():
    with pytest.raises(MeshError):
        SurfaceMesh1D.uniform(0.0, 1.0, 0)
    with pytest.raises(MeshError, match="increasing"):
        SurfaceMesh1D(np.array([0.0, 2.0, 1.0]), np.array([[0, 1], [1, 2]]), {0: "inflow", 2: "outflow"})
    with pytest.raises(MeshError, match="tag"):
        SurfaceMesh1D(np.array([0.0, 1.0]), np.array([[0, 1]]), {0: "inflow"})


def test_face_classification_counts(mesh):
    sizes = {name: fs.size for name, fs in mesh.faces.items()}
    assert sizes == {"lat": 6, "horiz": 4, "top": 4, "bot": 4, "inflow": 0, "outflow": 4}
    darcy = {name: fs.size for name, fs in mesh.darcy_faces.items()}
    assert darcy == {"int": 10, "dirichlet": 0, "neumann": 8, "top": 4}
    assert mesh.n_elements == 8
    assert mesh.n_darcy_elements == 8


def test_inflow_faces_sit_on_the_tagged_side():
    mesh = slice_mesh(small_config(inflow_side="left"))
    inflow = mesh.faces["inflow"]
    assert inflow.size == 2
    np.testing.assert_allclose(inflow.normal, [[-1.0, 0.0]] * 2)
    assert np.all(mesh.element_column[inflow.owner] == 0)


def test_darcy_side_types_route_faces():
    mesh = slice_mesh(small_config(darcy_sides={"left": "dirichlet", "bottom": "dirichlet"}))
    assert mesh.darcy_faces["dirichlet"].size == 2 + 4
    assert mesh.darcy_faces["neumann"].size == 2


def test_normals_are_unit_and_point_out_of_owner():
    mesh = slice_mesh(small_config(bed_slope=0.05))
    for faces in (mesh.faces, mesh.darcy_faces):
        for fs in faces.values():
            if fs.size:
                np.testing.assert_allclose(np.linalg.norm(fs.normal, axis=1), 1.0)
    assert np.all(mesh.faces["top"].normal[:, 1] > 0.0)
    assert np.all(mesh.faces["bot"].normal[:, 1] < 0.0)
    assert np.all(mesh.faces["bot"].normal[:, 0] > 0.0)
    np.testing.assert_allclose(mesh.faces["lat"].normal, [[1.0, 0.0]] * 6)


def test_interface_faces_are_paired():
    mesh = slice_mesh(small_config(bed_slope=0.05))
    bot, top = mesh.faces["bot"], mesh.darcy_faces["top"]
    assert np.all(bot.owner_face == FACE_BOTTOM)
    assert np.all(top.owner_face == FACE_TOP)
    x_free, z_free = mesh.freeflow_space(1).face_points(bot.owner, bot.owner_face)
    x_darcy, z_darcy = mesh.darcy_space(1).face_points(top.owner, top.owner_face)
    np.testing.assert_allclose(x_free, x_darcy)
    np.testing.assert_allclose(z_free, z_darcy, atol=1e-14)
    np.testing.assert_allclose(bot.normal, -top.normal)


def test_sigma_layers_split_the_column_evenly(mesh):
    np.testing.assert_allclose(mesh.column_z[:, 0], 0.0)
    np.testing.assert_allclose(mesh.column_z[:, 1], 0.5)
    np.testing.assert_allclose(mesh.column_z[:, -1], 1.0)
    np.testing.assert_allclose(mesh.darcy_z[:, 0], -2.0)
    np.testing.assert_allclose(mesh.darcy_z[:, -1], 0.0)


def test_geometry_lookup(mesh):
    geom = mesh.faces["lat"].geometry(0)
    assert geom.face_class == "lat"
    assert geom.neighbor == geom.owner + mesh.layers
    assert mesh.faces["top"].geometry(0).neighbor is None


@pytest.mark.parametrize(
    "overrides,elevation,match",
    [
        ({}, constant(-0.5), "below bathymetry"),
        ({"layers": 0}, None, "Layer counts"),
        ({"z_bottom": 0.0}, None, "Darcy base"),
    ],
)
def test_build_rejects_invalid_geometry(overrides, elevation, match):
    config = small_config(**overrides)
    with pytest.raises(MeshError, match=match):
        build_layered_mesh(config, elevation if elevation is not None else constant(config.rest_level))


def test_smooth_free_surface_averages_traces():
    surface = SurfaceMesh1D.uniform(0.0, 2.0, 2, "left")
    xi = DGField("xi", 0, np.array([[1.0], [3.0]]) * np.sqrt(2.0), 0, "surface")
    np.testing.assert_allclose(smooth_free_surface(xi, surface, None), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(smooth_free_surface(xi, surface, 1.5), [1.5, 2.0, 3.0])


def test_smooth_free_surface_keeps_continuous_linears():
    surface = SurfaceMesh1D.uniform(0.0, 4.0, 4, "none")
    space = surface.space(1, 6)
    xi = DGField("xi", 1, space.project(lambda x: 2.0 + 0.1 * x), 0, "surface")
    np.testing.assert_allclose(smooth_free_surface(xi, surface, None), 2.0 + 0.1 * surface.nodes)


def test_move_mesh_keeps_darcy_block(mesh):
    moved = move_mesh(mesh, mesh.xi_s + np.array([0.0, 0.1, 0.2, 0.1, 0.0]))
    assert moved.mesh_id == mesh.mesh_id
    assert moved.darcy_z is mesh.darcy_z
    np.testing.assert_allclose(moved.column_z[:, -1], moved.xi_s)
    np.testing.assert_allclose(moved.column_z[:, 0], mesh.z_b)
    np.testing.assert_allclose(moved.xi_s_at(np.array([1.5])), [1.15])
    with pytest.raises(MeshError):
        move_mesh(mesh, mesh.z_b)


def test_dump_mesh_csv(mesh, tmp_path):
    elements_path, faces_path = dump_mesh_csv(mesh, tmp_path / "mesh")
    elements = pd.read_csv(elements_path)
    faces = pd.read_csv(faces_path)
    assert len(elements) == 16
    assert set(elements["block"]) == {"freeflow", "darcy"}
    assert len(faces) == mesh.face_count() + sum(fs.size for fs in mesh.darcy_faces.values())
