"""Small slice meshes and states shared by the check modules and the test suite."""

from collections.abc import Callable
from typing import Any

import numpy as np

from ..config import RunConfig
from ..driver import constant, project_darcy, project_hydro
from ..freeflow import HydroState
from ..mesh import LayeredSliceMesh, build_layered_mesh
from ..subsurface import DarcyState

Fn = Callable[..., np.ndarray]

__all__ = ["constant", "darcy_state", "hydro_state", "interface_zeros", "slice_mesh", "small_config"]


def small_config(**overrides: Any) -> RunConfig:
    """A 4x2 closed box over a flat bed on [0, 4] with a 2-layer Darcy block below."""
    settings: dict[str, Any] = {
        "scenario": "rest",
        "x_min": 0.0,
        "x_max": 4.0,
        "columns": 4,
        "layers": 2,
        "darcy_layers": 2,
        "z_bottom": -2.0,
        "bed_slope": 0.0,
        "rest_level": 1.0,
        "inflow_side": "none",
        "end_time": 0.0,
    }
    settings.update(overrides)
    return RunConfig(**settings)


def slice_mesh(config: RunConfig, elevation: Fn | None = None) -> LayeredSliceMesh:
    return build_layered_mesh(config, elevation if elevation is not None else constant(config.rest_level))


def hydro_state(mesh: LayeredSliceMesh, config: RunConfig, xi: Fn, u: Fn) -> HydroState:
    return project_hydro(mesh, config, xi, u)


def darcy_state(mesh: LayeredSliceMesh, config: RunConfig, head: Fn) -> DarcyState:
    return project_darcy(mesh, config, head)


def interface_zeros(mesh: LayeredSliceMesh) -> np.ndarray:
    """Zero values at the quadrature points of the interface faces."""
    return np.zeros((mesh.faces["bot"].size, mesh.freeflow_space(0).face_rule.size))
