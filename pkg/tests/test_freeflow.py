import numpy as np
import pytest

from ldgcouple.checks._support import constant, hydro_state, interface_zeros, slice_mesh, small_config
from ldgcouple.checks.fluxes import conservativity_defect, lambda_bound_margin
from ldgcouple.checks.local_solves import linear_velocity_column, random_velocity_residuals
from ldgcouple.errors import ConfigError, SolveError
from ldgcouple.freeflow import (
    HydroBoundaryData,
    HydroCoefficients,
    HydroState,
    assemble_momentum_rhs,
    assemble_pce_rhs,
    compute_lambda_u,
    flux_R_H,
    flux_R_U,
    flux_S_Q,
    flux_S_U,
    friction_stress,
    solve_auxiliary_Q,
    surface_gap,
)


def test_lambda_examples():
    assert compute_lambda_u("lat", np.array(0.0), np.array(0.0)) == pytest.approx(1.0)
    assert compute_lambda_u("inflow", np.array(0.75)) == pytest.approx(2.0)
    with pytest.raises(SolveError):
        compute_lambda_u("horiz", np.array(0.0))
    with pytest.raises(SolveError):
        compute_lambda_u("lat", np.array(0.0))


def test_lambda_lower_bound(rng):
    a, b = rng.uniform(-1e3, 1e3, (2, 10_000))
    assert lambda_bound_margin(a, b) >= -1.0
    lam = compute_lambda_u("lat", a, b)
    assert np.all(lam > np.abs(a) + np.abs(b))


def test_interior_fluxes_are_conservative(rng):
    defects = conservativity_defect(rng, 2000)
    assert max(defects.values()) < 1e-13


def test_flux_R_H_per_class():
    nx = np.array([1.0])
    np.testing.assert_allclose(flux_R_H("lat", nx, np.array([1.0]), np.array([3.0])), [2.0])
    np.testing.assert_allclose(flux_R_H("inflow", -nx, np.array([0.5])), [-0.5])
    np.testing.assert_allclose(flux_R_H("inflow", -nx, np.array([0.5]), u_hat=np.array([0.3])), [-0.3])
    np.testing.assert_allclose(flux_R_H("outflow", nx, np.array([0.5]), u_hat=np.array([0.2])), [0.2])
    with pytest.raises(SolveError):
        flux_R_H("outflow", nx, np.array([0.5]))
    with pytest.raises(SolveError):
        flux_R_H("horiz", nx, np.array([0.5]))


def test_flux_R_H_elevation_penalty():
    nx = np.array([1.0])
    lam = np.array([2.0])
    value = flux_R_H("lat", nx, np.array([1.0]), np.array([3.0]), lam=lam, xi_jump=np.array([0.1]))
    np.testing.assert_allclose(value, [2.1])
    value = flux_R_H("inflow", -nx, np.array([0.5]), u_hat=np.array([0.3]), lam=lam, xi_jump=np.array([-0.2]))
    np.testing.assert_allclose(value, [-0.5])
    with pytest.raises(SolveError, match="λ_U"):
        flux_R_H("lat", nx, np.array([1.0]), np.array([3.0]), xi_jump=np.array([0.1]))
    with pytest.raises(SolveError, match="outflow"):
        flux_R_H("outflow", nx, np.array([0.5]), u_hat=np.array([0.2]), lam=lam, xi_jump=np.array([0.1]))


def test_outflow_uses_boundary_data_when_given():
    nx = np.array([1.0])
    u, xi = np.array([0.5]), np.array([2.0])
    own = flux_R_U("outflow", nx, u, xi, gravity=1.0, u_hat=np.array([0.2]))
    data = flux_R_U("outflow", nx, u, xi, gravity=1.0, u_hat=np.array([0.2]), xi_hat=np.array([1.5]))
    np.testing.assert_allclose(own, [2.1])
    np.testing.assert_allclose(data, [1.6])
    q = (np.array([1.0]), np.array([2.0]))
    exact = (np.array([4.0]), np.array([0.0]))
    np.testing.assert_allclose(flux_S_U("inflow", (-nx, np.zeros(1)), q, exact_stress=exact), [-4.0])


def test_boundary_data_analytic_classes():
    stress = lambda t, x, z: (np.zeros_like(x), np.ones_like(x))  # noqa: E731
    data = HydroBoundaryData(constant(1.0), constant(0.0), stress=stress, analytic=frozenset({"outflow"}))
    x = np.array([0.5])
    assert data.exact_stress("inflow", 0.0, x, x) is None
    np.testing.assert_allclose(data.exact_stress("outflow", 0.0, x, x)[1], [1.0])
    with pytest.raises(ConfigError):
        HydroBoundaryData(constant(1.0), constant(0.0), analytic=frozenset({"top"}))
    with pytest.raises(ConfigError):
        HydroBoundaryData(constant(1.0), constant(0.0), stress=stress, analytic=frozenset({"lat"}))


def test_flux_R_U_requires_face_data():
    one = np.ones(3)
    with pytest.raises(SolveError, match="interface flux"):
        flux_R_U("bot", one, one, one)
    with pytest.raises(SolveError, match="λ_U"):
        flux_R_U("lat", one, one, one, u_neighbor=one, xi_neighbor=one)
    with pytest.raises(SolveError):
        flux_R_U("side", one, one, one)


def test_flux_R_U_at_rest_is_pure_pressure():
    nx = np.array([0.6])
    zero = np.zeros(1)
    xi = np.array([2.0])
    value = flux_R_U("bot", nx, zero, xi, gravity=1.0, interface_flux=np.array([0.3]))
    np.testing.assert_allclose(value, [1.2])


def test_flux_S_U_and_friction():
    q = (np.array([1.0]), np.array([2.0]))
    normal = (np.array([0.0]), np.array([1.0]))
    np.testing.assert_allclose(flux_S_U("top", normal, q), [0.0])
    np.testing.assert_allclose(flux_S_U("outflow", normal, q), [2.0])
    np.testing.assert_allclose(flux_S_U("top", normal, q, exact_stress=(np.array([0.0]), np.array([5.0]))), [5.0])
    np.testing.assert_allclose(
        flux_S_U("bot", normal, q, u_owner=np.array([-2.0]), friction_law="quadratic", friction=0.1), [-0.4]
    )
    np.testing.assert_allclose(friction_stress(np.array([-2.0]), "linear", 0.1), [-0.2])
    with pytest.raises(ConfigError):
        friction_stress(np.array([1.0]), "linear", -1.0)
    with pytest.raises(SolveError):
        flux_S_U("bot", normal, q)


def test_flux_S_Q_per_class():
    u = np.array([1.0])
    assert flux_S_Q("horiz", u, np.array([3.0]))[0] == 2.0
    assert flux_S_Q("top", u)[0] == 1.0
    assert flux_S_Q("inflow", u, u_hat=np.array([0.0]))[0] == 0.0
    with pytest.raises(SolveError):
        flux_S_Q("outflow", u)


def test_coefficients_validation():
    with pytest.raises(ConfigError):
        HydroCoefficients(diffusion=np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ConfigError):
        HydroCoefficients(diffusion=-np.eye(2))
    with pytest.raises(ConfigError):
        HydroCoefficients(friction=-0.1)
    np.testing.assert_allclose(HydroCoefficients().inverse_diffusion, 20.0 * np.eye(2))


def test_auxiliary_Q_of_linear_velocity():
    config = small_config(bed_slope=0.05)
    mesh = slice_mesh(config)

    def velocity(x, z):
        return 0.3 * x - 0.2 * z

    state = hydro_state(mesh, config, constant(config.rest_level), velocity)
    boundary = HydroBoundaryData(xi_hat=constant(config.rest_level), u_hat=lambda t, x, z: velocity(x, z))
    coefficients = HydroCoefficients(diffusion=np.diag([0.05, 0.02]))
    q = solve_auxiliary_Q(state, mesh, coefficients, boundary, 0.0)
    space = mesh.freeflow_space(state.q.order)
    np.testing.assert_allclose(space.values(q[0]), -0.05 * 0.3, atol=1e-12)
    np.testing.assert_allclose(space.values(q[1]), 0.02 * 0.2, atol=1e-12)


def test_vertical_velocity_of_linear_column():
    deviation, residual = linear_velocity_column()
    assert deviation < 1e-10
    assert residual < 1e-11


def test_local_solves_satisfy_their_equations():
    q_res, w_res = random_velocity_residuals(7)
    assert q_res < 1e-11
    assert w_res < 1e-11


def test_pce_conserves_volume_in_a_closed_box(rng):
    config = small_config(bed_slope=0.05)
    mesh = slice_mesh(config)
    state = hydro_state(mesh, config, constant(config.rest_level), constant(0.0))
    state = HydroState(state.xi, state.u.with_coeffs(rng.normal(size=state.u.scalar.shape)), state.w, state.q)
    dxi = assemble_pce_rhs(
        state, mesh, HydroCoefficients(), interface_zeros(mesh), HydroBoundaryData.closed_box(1.0), 0.0
    )
    space = mesh.surface_space(state.xi.order)
    assert abs(space.integrate(space.values(dxi))) < 1e-13


def test_pce_sees_the_interface_flux(mesh, config):
    state = hydro_state(mesh, config, constant(config.rest_level), constant(0.0))
    flux = interface_zeros(mesh) + 0.01
    dxi = assemble_pce_rhs(state, mesh, HydroCoefficients(), flux, HydroBoundaryData.closed_box(1.0), 0.0)
    space = mesh.surface_space(state.xi.order)
    np.testing.assert_allclose(space.values(dxi), -0.01, atol=1e-14)


def test_penalised_pce_levels_a_surface_step(mesh, config):
    state = hydro_state(mesh, config, lambda x: np.where(x < 2.0, 1.2, 1.0), constant(0.0))
    boundary = HydroBoundaryData.closed_box(1.0)
    space = mesh.surface_space(state.xi.order)
    central = assemble_pce_rhs(state, mesh, HydroCoefficients(), interface_zeros(mesh), boundary, 0.0)
    np.testing.assert_allclose(central, 0.0, atol=1e-14)
    dxi = assemble_pce_rhs(
        state, mesh, HydroCoefficients(pce_flux="lax-friedrichs"), interface_zeros(mesh), boundary, 0.0
    )
    # λ = 1 at rest and the face at x = 2 spans the unit water depth.
    assert space.integrate(space.values(dxi) * (space.x < 2.0)) == pytest.approx(-0.1, abs=1e-12)
    assert space.integrate(space.values(dxi)) == pytest.approx(0.0, abs=1e-12)


def test_penalised_pce_is_inert_on_a_smooth_surface(mesh, config):
    state = hydro_state(mesh, config, constant(config.rest_level), constant(0.0))
    state = HydroState(state.xi, state.u.with_coeffs(np.full_like(state.u.scalar, 0.1)), state.w, state.q)
    boundary = HydroBoundaryData.closed_box(1.0)
    args = (state, mesh)
    tail = (interface_zeros(mesh), boundary, 0.0)
    central = assemble_pce_rhs(*args, HydroCoefficients(), *tail)
    penalised = assemble_pce_rhs(*args, HydroCoefficients(pce_flux="lax-friedrichs"), *tail)
    np.testing.assert_allclose(penalised, central, atol=1e-13)


@pytest.mark.parametrize("slope", [0.0, 0.05])
def test_momentum_rhs_vanishes_at_rest(slope):
    config = small_config(bed_slope=slope)
    mesh = slice_mesh(config)
    state = hydro_state(mesh, config, constant(config.rest_level), constant(0.0))
    gap = surface_gap(mesh, state.xi)
    np.testing.assert_allclose(gap, 0.0, atol=1e-14)
    du = assemble_momentum_rhs(
        state, mesh, HydroCoefficients(), np.zeros_like(gap), interface_zeros(mesh), HydroBoundaryData.closed_box(1.0), 0.0
    )
    np.testing.assert_allclose(du, 0.0, atol=1e-12)


def test_missing_interface_data_raises(mesh, config):
    state = hydro_state(mesh, config, constant(config.rest_level), constant(0.0))
    with pytest.raises(SolveError):
        assemble_momentum_rhs(
            state, mesh, HydroCoefficients(), None, interface_zeros(mesh), HydroBoundaryData.closed_box(1.0), 0.0
        )
