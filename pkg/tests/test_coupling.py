import numpy as np
import pytest

from ldgcouple.checks._support import constant, small_config
from ldgcouple.checks.balance import closed_box_run, energy_trend, rest_drift
from ldgcouple.coupling import (
    CoupledProblem,
    CoupledState,
    _guard,
    coupled_step,
    coupled_volume,
    energy_budget,
    free_flow_substep,
    interface_dynamic_head,
    interface_normal_flux,
    interface_trace,
)
from ldgcouple.driver import setup
from ldgcouple.errors import InstabilityError
from ldgcouple.subsurface import DarcyState, assemble_darcy_head_rhs, solve_darcy_flux


def test_dynamic_head():
    np.testing.assert_allclose(interface_dynamic_head(np.array([1.0]), np.array([2.0])), [3.0])
    np.testing.assert_allclose(interface_dynamic_head(np.array([1.0]), np.array([2.0]), gravity=2.0), [2.0])


def test_downward_seepage_is_a_positive_interface_flux():
    _, state, _ = setup(small_config())
    mesh, darcy = state.mesh, state.darcy
    space = mesh.darcy_space(darcy.flux.order)
    flux = np.stack([space.project(constant(0.0)), space.project(constant(-0.01))])
    seeping = DarcyState(darcy.head, darcy.flux.with_coeffs(flux))
    np.testing.assert_allclose(interface_normal_flux(seeping, mesh), 0.01, atol=1e-15)


def test_problem_darcy_step():
    problem, _, _ = setup(small_config())
    assert isinstance(problem, CoupledProblem)
    assert problem.dt_darcy == pytest.approx(problem.subcycles * problem.dt)


def test_interface_trace_at_rest():
    problem, state, _ = setup(small_config())
    trace = interface_trace(state, problem)
    np.testing.assert_allclose(trace.dynamic_head, 1.0, atol=1e-14)
    np.testing.assert_allclose(trace.normal_flux, 0.0, atol=1e-14)
    np.testing.assert_allclose(trace.friction, 0.0, atol=1e-14)


def test_guard_reports_step_and_time():
    with pytest.raises(InstabilityError) as info:
        _guard({"u": np.array([1.0, np.inf])}, 3, 0.25)
    assert info.value.step == 3
    assert info.value.time == 0.25
    with pytest.raises(InstabilityError, match="exceed"):
        _guard({"xi": np.array([2e12])}, 0, 0.0)
    _guard({"xi": np.zeros(0)}, 0, 0.0)


def test_coupled_step_advances_time_without_mutating_input():
    problem, state, _ = setup(small_config(scenario="bump", bump_amplitude=0.05, bump_width=0.8))
    xi_before = state.hydro.xi.coeffs.copy()
    head_before = state.darcy.head.coeffs.copy()
    new_state, budget = coupled_step(state, problem)
    assert new_state.step == 1
    assert new_state.time == pytest.approx(problem.dt_darcy)
    assert budget.step == 1
    np.testing.assert_array_equal(state.hydro.xi.coeffs, xi_before)
    np.testing.assert_array_equal(state.darcy.head.coeffs, head_before)
    assert new_state.mesh.mesh_id == state.mesh.mesh_id
    np.testing.assert_allclose(new_state.mesh.column_z[:, -1], new_state.mesh.xi_s)


def test_lake_at_rest_is_preserved():
    assert rest_drift(steps=5) < 1e-12


def test_closed_box_volume_is_conserved():
    volumes, _, _ = closed_box_run(steps=5)
    assert np.max(np.abs(np.diff(volumes))) < 1e-12 * max(1.0, abs(volumes[0]))


def test_energy_budget_terms():
    problem, state, _ = setup(small_config(scenario="bump", bump_amplitude=0.05, bump_width=0.8))
    budget = energy_budget(state, problem)
    assert budget.total == pytest.approx(budget.xi_sq + budget.u_sq + budget.head_sq)
    assert all(value >= -1e-14 for value in budget.dissipation_terms().values())
    row = budget.as_row()
    assert row["total"] == budget.total
    assert row["time"] == 0.0


def test_energy_does_not_grow():
    _, budgets, dt = closed_box_run(steps=5)
    slope, slack = energy_trend(budgets, dt)
    assert slope <= slack


def test_closed_box_volume_matches_integrals():
    _, state, _ = setup(small_config())
    # Ξ = 1 over [0, 4] plus H̃ = 1 over a 4 x 2 block.
    assert coupled_volume(state) == pytest.approx(4.0 + 8.0)


@pytest.mark.slow
def test_long_rest_run():
    assert rest_drift(steps=100) < 1e-12


@pytest.mark.slow
def test_long_closed_box_run():
    volumes, budgets, dt = closed_box_run(steps=1000)
    assert np.max(np.abs(np.diff(volumes))) < 1e-12 * max(1.0, abs(volumes[0]))
    slope, slack = energy_trend(budgets, dt)
    assert slope <= slack


def _lock_step(state, problem):
    """Free flow and Darcy advanced together by one shared step."""
    flux = interface_normal_flux(state.darcy, state.mesh)
    moved = free_flow_substep(state, problem, flux)
    darcy = state.darcy
    dhead = assemble_darcy_head_rhs(darcy, moved.mesh, problem.darcy, flux, state.time)
    head = darcy.head.with_coeffs(darcy.head.scalar + problem.dt * dhead)
    t1 = state.time + problem.dt
    dynamic_head = interface_trace(moved, problem).dynamic_head
    seepage = darcy.flux.with_coeffs(
        solve_darcy_flux(DarcyState(head, darcy.flux), moved.mesh, problem.darcy, dynamic_head, t1)
    )
    return CoupledState(moved.hydro, DarcyState(head, seepage), moved.mesh, t1, state.step + 1, moved.previous_gap)


def test_single_subcycle_is_the_lock_step_scheme():
    problem, state, _ = setup(small_config(scenario="bump", bump_amplitude=0.05, bump_width=0.8, subcycles=1))
    assert problem.dt_darcy == problem.dt
    stepped, reference = state, state
    for _ in range(2):
        stepped, _ = coupled_step(stepped, problem)
        reference = _lock_step(reference, problem)
    assert stepped.time == reference.time
    for a, b in (
        (stepped.hydro.xi, reference.hydro.xi),
        (stepped.hydro.u, reference.hydro.u),
        (stepped.hydro.w, reference.hydro.w),
        (stepped.darcy.head, reference.darcy.head),
        (stepped.darcy.flux, reference.darcy.flux),
    ):
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
    np.testing.assert_array_equal(stepped.mesh.xi_s, reference.mesh.xi_s)
