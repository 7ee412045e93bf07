"""Element-local solves for Q, W and the Darcy velocity against closed forms and plug-back residuals."""

import logging
from typing import Any

import numpy as np

from ..freeflow import (
    HydroBoundaryData,
    HydroCoefficients,
    HydroState,
    auxiliary_Q_residual,
    continuity_residual,
    solve_auxiliary_Q,
    solve_vertical_velocity,
)
from ..subsurface import DarcyCoefficients, DarcyState, darcy_flux_residual, solve_darcy_flux
from . import CheckOutcome
from ._support import constant, darcy_state, hydro_state, interface_zeros, slice_mesh, small_config

logger = logging.getLogger(__name__)

SLOPE = 0.3


def linear_velocity_column() -> tuple[float, float]:
    """W for U = c x over a flat bed: max deviation from -c z and the plug-back residual."""
    config = small_config()
    mesh = slice_mesh(config)
    state = hydro_state(mesh, config, constant(config.rest_level), lambda x, z: SLOPE * x)
    boundary = HydroBoundaryData(xi_hat=constant(config.rest_level), u_hat=lambda t, x, z: SLOPE * x)
    flux = interface_zeros(mesh)
    w = state.w.with_coeffs(solve_vertical_velocity(state, mesh, flux, boundary, 0.0))
    space = mesh.freeflow_space(w.order)
    deviation = float(np.max(np.abs(space.values(w.scalar) + SLOPE * space.z)))
    solved = HydroState(state.xi, state.u, w, state.q)
    return deviation, continuity_residual(solved, mesh, flux, boundary, 0.0)


def random_velocity_residuals(seed: int = 30) -> tuple[float, float]:
    """Plug-back residuals of the Q and W solves for random U coefficients."""
    rng = np.random.default_rng(seed)
    config = small_config(bed_slope=0.05)
    mesh = slice_mesh(config)
    state = hydro_state(mesh, config, constant(config.rest_level), constant(0.0))
    u = state.u.with_coeffs(rng.normal(size=state.u.scalar.shape))
    state = HydroState(state.xi, u, state.w, state.q)
    coefficients = HydroCoefficients()
    boundary = HydroBoundaryData.closed_box(config.rest_level)
    flux = rng.normal(scale=0.01, size=interface_zeros(mesh).shape)
    q = state.q.with_coeffs(solve_auxiliary_Q(state, mesh, coefficients, boundary, 0.0))
    state = HydroState(state.xi, state.u, state.w, q)
    w = state.w.with_coeffs(solve_vertical_velocity(state, mesh, flux, boundary, 0.0))
    state = HydroState(state.xi, state.u, w, q)
    return (
        auxiliary_Q_residual(state, mesh, coefficients, boundary, 0.0),
        continuity_residual(state, mesh, flux, boundary, 0.0),
    )


def linear_head_velocity() -> float:
    """Max deviation of Ũ from (0, -0.01) for H̃ = z with matching Dirichlet data."""
    config = small_config(darcy_sides={"left": "dirichlet", "right": "dirichlet", "bottom": "dirichlet"})
    mesh = slice_mesh(config)
    state = darcy_state(mesh, config, lambda x, z: z)
    coefficients = DarcyCoefficients(conductivity=0.01 * np.eye(2), head_bc=lambda t, x, z: z)
    # The interface lies on the flat bed z = 0.
    flux = solve_darcy_flux(state, mesh, coefficients, interface_zeros(mesh), 0.0)
    space = mesh.darcy_space(state.flux.order)
    return max(
        float(np.max(np.abs(space.values(flux[0])))),
        float(np.max(np.abs(space.values(flux[1]) + 0.01))),
    )


def random_head_residual(seed: int = 31) -> float:
    rng = np.random.default_rng(seed)
    config = small_config(bed_slope=0.05, darcy_sides={"left": "dirichlet", "bottom": "dirichlet"})
    mesh = slice_mesh(config)
    state = darcy_state(mesh, config, constant(0.0))
    state = DarcyState(state.head.with_coeffs(rng.normal(size=state.head.scalar.shape)), state.flux)
    coefficients = DarcyCoefficients()
    interface_head = rng.normal(size=interface_zeros(mesh).shape)
    flux = state.flux.with_coeffs(solve_darcy_flux(state, mesh, coefficients, interface_head, 0.0))
    return darcy_flux_residual(DarcyState(state.head, flux), mesh, coefficients, interface_head, 0.0)


def check_vertical_velocity(seed: int) -> CheckOutcome:
    deviation, residual = linear_velocity_column()
    return CheckOutcome(deviation < 1e-10 and residual < 1e-11, f"|W + c z| = {deviation:.1e}, residual {residual:.1e}")


def check_plug_back(seed: int) -> CheckOutcome:
    q_res, w_res = random_velocity_residuals(seed)
    h_res = random_head_residual(seed + 1)
    passed = q_res < 1e-11 and w_res < 1e-11 and h_res < 1e-11
    return CheckOutcome(passed, f"Q {q_res:.1e}, W {w_res:.1e}, Darcy {h_res:.1e}")


def check_darcy_linear_head(seed: int) -> CheckOutcome:
    deviation = linear_head_velocity()
    return CheckOutcome(deviation < 1e-13, f"|Ũ - (0, -0.01)| = {deviation:.1e}")


def get_check_definition() -> dict[str, Any]:
    return {
        "name": "local_solves",
        "description": "Element-local LDG solves for Q, W and Ũ.",
        "checks": [
            {"name": "vertical_velocity", "description": "W = -c z for U = c x.", "handler": check_vertical_velocity},
            {"name": "plug_back", "description": "Residuals of random solves.", "handler": check_plug_back},
            {"name": "darcy_linear_head", "description": "Darcy law on H̃ = z.", "handler": check_darcy_linear_head},
        ],
    }
