import math

import numpy as np
import pytest

from ldgcouple.checks._support import slice_mesh, small_config
from ldgcouple.dgcore import (
    DGField,
    LineSpace,
    QuadSpace,
    eoc,
    eval_field,
    gauss_rule,
    get_basis,
    jump_avg,
    l2_error,
    local_solve,
    mixed_mass,
    project_l2,
    reference_mass_matrix,
    split_components,
)
from ldgcouple.errors import MeshError, SolveError


@pytest.mark.parametrize("degree", [0, 3, 8])
def test_gauss_rule_integrates_monomials(degree):
    rule = gauss_rule(degree)
    for k in range(degree + 1):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.sum(rule.weights * rule.points**k) == pytest.approx(exact, abs=1e-14)


def test_gauss_rule_2d_area():
    rule = gauss_rule(4, dim=2)
    assert rule.points.shape == (rule.size, 2)
    assert np.sum(rule.weights) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        gauss_rule(2, dim=3)


@pytest.mark.parametrize("dim,order", [(1, 0), (1, 3), (2, 1), (2, 2)])
def test_basis_is_orthonormal(dim, order):
    basis = get_basis(dim, order)
    mass = reference_mass_matrix(basis, gauss_rule(2 * order + 2, dim))
    np.testing.assert_allclose(mass, np.eye(basis.n_modes), atol=1e-13)


def test_basis_rejects_negative_order():
    with pytest.raises(ValueError):
        get_basis(1, -1)


def test_field_shape_checks():
    field_ = DGField("xi", 2, np.zeros((4, 3)), 0, "surface")
    assert field_.n_comp == 1
    assert field_.n_elements == 4
    with pytest.raises(ValueError, match="modes"):
        DGField("u", 1, np.zeros((4, 3)), 0, "freeflow")


def test_field_copy_is_independent():
    field_ = DGField("u", 0, np.ones((2, 1)), 0, "freeflow")
    copy = field_.copy()
    copy.coeffs[0, 0, 0] = 5.0
    assert field_.coeffs[0, 0, 0] == 1.0
    assert field_.with_coeffs(np.zeros((2, 1))).name == "u"


def test_eval_field_constant_mode():
    surface = DGField("xi", 0, np.array([[math.sqrt(2.0) * 3.0]]), 0, "surface")
    assert eval_field(surface, 0, 0.3) == pytest.approx(3.0)
    column = DGField("u", 0, np.array([[2.0 * 1.5]]), 0, "freeflow")
    assert eval_field(column, 0, np.array([0.1, -0.4])) == pytest.approx(1.5)
    with pytest.raises(MeshError):
        eval_field(column, 1, np.array([0.0, 0.0]))


def test_jump_avg_scalar_and_vector():
    avg, jump = jump_avg(np.array([1.0]), np.array([3.0]), np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(avg, [2.0])
    np.testing.assert_allclose(jump, [[-2.0, 0.0]])
    avg, jump = jump_avg(np.array([[1.0, 2.0]]), np.zeros((1, 2)), np.array([[0.0, 1.0]]), kind="vector")
    np.testing.assert_allclose(avg, [[0.5, 1.0]])
    np.testing.assert_allclose(jump, [2.0])


def test_average_of_product_splits_into_averages_and_jumps(rng):
    a1, a2, c1, c2 = rng.normal(size=(4, 50))
    normal = rng.normal(size=(50, 2))
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    avg_ac, _ = jump_avg(a1 * c1, a2 * c2, normal)
    avg_a, jump_a = jump_avg(a1, a2, normal)
    avg_c, jump_c = jump_avg(c1, c2, normal)
    np.testing.assert_allclose(avg_ac, avg_a * avg_c + 0.25 * np.sum(jump_a * jump_c, axis=-1), atol=1e-14)


def test_eoc_examples():
    assert eoc(2.47e-1, 5.52e-2, 50.0, 25.0) == pytest.approx(2.16, abs=0.01)
    assert eoc(1.0, 0.25, 2.0, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        eoc(0.0, 1.0, 2.0, 1.0)


def test_line_space_projection_is_exact_for_polynomials():
    space = LineSpace(np.array([0.0, 1.0, 3.0]), np.array([1.0, 3.0, 4.0]), 2, gauss_rule(8))
    coeffs = space.project(lambda x: 1.0 - 2.0 * x + 0.5 * x * x)
    assert l2_error(coeffs, lambda x: 1.0 - 2.0 * x + 0.5 * x * x, space) < 1e-12
    assert space.integrate(np.ones_like(space.x)) == pytest.approx(4.0)


def test_line_space_rejects_empty_elements():
    with pytest.raises(MeshError):
        LineSpace(np.array([1.0]), np.array([1.0]), 1, gauss_rule(4))


def test_trapezoid_area_and_degenerate_element():
    one = np.ones(1)
    space = QuadSpace(0 * one, 2 * one, 0 * one, one, 3 * one, 3 * one, 1, gauss_rule(6, 2))
    assert space.integrate(np.ones_like(space.x)) == pytest.approx(5.0)
    with pytest.raises(MeshError):
        QuadSpace(0 * one, 2 * one, 0 * one, 0 * one, -one, one, 1, gauss_rule(6, 2))


def test_quad_projection_exact_on_rectangles():
    mesh = slice_mesh(small_config())
    space = mesh.freeflow_space(2)

    def f(x, z):
        return 1.0 + x - 2.0 * z + 0.5 * x * z

    field_ = project_l2(f, space, "f")
    assert field_.order == 2
    assert l2_error(field_.scalar, f, space) < 1e-12


def test_quad_gradient_of_linear_function():
    mesh = slice_mesh(small_config(bed_slope=0.05))
    space = mesh.freeflow_space(1)
    coeffs = space.project(lambda x, z: 2.0 * x - 3.0 * z)
    gx, gz = space.gradient(coeffs)
    np.testing.assert_allclose(gx, 2.0, atol=1e-10)
    np.testing.assert_allclose(gz, -3.0, atol=1e-10)


def test_mixed_mass_and_split_components():
    mesh = slice_mesh(small_config())
    space = mesh.freeflow_space(1)
    matrix = mixed_mass(space, np.eye(2))
    assert matrix.shape == (space.n_elements, 2 * space.n_modes, 2 * space.n_modes)
    stacked = np.arange(12.0).reshape(2, 6)
    parts = split_components(stacked)
    assert parts.shape == (2, 2, 3)
    np.testing.assert_array_equal(parts[1, 0], [3.0, 4.0, 5.0])


def test_local_solve_guards_singular_systems():
    matrices = np.stack([np.eye(2), np.zeros((2, 2))])
    with pytest.raises(SolveError, match="W"):
        local_solve(matrices, np.ones((2, 2)), "W")
    np.testing.assert_allclose(local_solve(2.0 * np.eye(2)[None], np.ones((1, 2)), "Q"), [[0.5, 0.5]])
