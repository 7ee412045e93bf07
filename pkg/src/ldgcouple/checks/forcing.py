"""Closed-form manufactured forcing against finite-difference and quadrature residuals of the analytic fields."""

import logging
from typing import Any

import numpy as np

from ..mms import ManufacturedSolution
from . import CheckOutcome

logger = logging.getLogger(__name__)

STEP = 1e-3


def _d(f: Any, axis: int, *args: np.ndarray) -> np.ndarray:
    """Central difference of f(t, x[, z]) along argument ``axis``."""
    plus = list(args)
    minus = list(args)
    plus[axis] = plus[axis] + STEP
    minus[axis] = minus[axis] - STEP
    return (f(*plus) - f(*minus)) / (2.0 * STEP)


def _dd(f: Any, a: int, b: int, *args: np.ndarray) -> np.ndarray:
    return _d(lambda *p: _d(f, b, *p), a, *args)


def sample_points(solution: ManufacturedSolution, rng: np.random.Generator, n: int) -> tuple[np.ndarray, ...]:
    """Random (t, x, z_free, z_darcy) with z_free in the water column and z_darcy in [-5, z_b]."""
    t = rng.uniform(0.0, 10.0, n)
    x = rng.uniform(0.0, 100.0, n)
    zb = solution.z_b(x)
    z_free = zb + rng.uniform(0.0, 1.0, n) * (solution.xi(t, x) - zb)
    z_darcy = zb + rng.uniform(0.0, 1.0, n) * (-5.0 - zb)
    return t, x, z_free, z_darcy


def _relative(closed: np.ndarray, reference: np.ndarray) -> float:
    return float(np.max(np.abs(closed - reference)) / np.max(np.abs(reference)))


def forcing_errors(solution: ManufacturedSolution, rng: np.random.Generator, n: int = 100) -> dict[str, float]:
    """Max relative deviation of each closed-form source from its numerically evaluated residual."""
    t, x, zf, zd = sample_points(solution, rng, n)
    s = solution
    d, k, g = s.diffusion, s.conductivity, s.gravity

    def uu(tt: np.ndarray, xx: np.ndarray, zz: np.ndarray) -> np.ndarray:
        return s.u(tt, xx, zz) ** 2

    def uw(tt: np.ndarray, xx: np.ndarray, zz: np.ndarray) -> np.ndarray:
        return s.u(tt, xx, zz) * s.w(tt, xx, zz)

    def xi3(tt: np.ndarray, xx: np.ndarray, zz: np.ndarray) -> np.ndarray:
        return s.xi(tt, xx)

    args = (t, x, zf)
    laplace_u = d[0, 0] * _dd(s.u, 1, 1, *args) + 2.0 * d[0, 1] * _dd(s.u, 1, 2, *args) + d[1, 1] * _dd(s.u, 2, 2, *args)
    momentum = (
        _d(s.u, 0, *args) + _d(uu, 1, *args) + _d(uw, 2, *args) + g * _d(xi3, 1, *args) - laplace_u
    )
    args = (t, x, zd)
    laplace_h = (
        k[0, 0] * _dd(s.head, 1, 1, *args) + 2.0 * k[0, 1] * _dd(s.head, 1, 2, *args) + k[1, 1] * _dd(s.head, 2, 2, *args)
    )
    darcy = _d(s.head, 0, *args) - laplace_h

    n_pce = min(n, 20)
    pce_reference = np.array([s.pce_source_by_quadrature(float(tt), float(xx)) for tt, xx in zip(t[:n_pce], x[:n_pce], strict=True)])
    return {
        "momentum": _relative(s.momentum_source(t, x, zf), momentum),
        "darcy": _relative(s.darcy_source(t, x, zd), darcy),
        "pce": _relative(s.pce_source(t[:n_pce], x[:n_pce]), pce_reference),
        "continuity": float(np.max(np.abs(_d(s.u, 1, t, x, zf) + _d(s.w, 2, t, x, zf)))),
    }


def check_forcing(seed: int) -> CheckOutcome:
    errors = forcing_errors(ManufacturedSolution(), np.random.default_rng(seed))
    passed = all(errors[name] < 1e-6 for name in ("momentum", "darcy", "pce")) and errors["continuity"] < 1e-9
    return CheckOutcome(passed, ", ".join(f"{k}={v:.1e}" for k, v in errors.items()))


def get_check_definition() -> dict[str, Any]:
    return {
        "name": "forcing",
        "description": "Manufactured sources reproduce the residuals of the analytic solution.",
        "checks": [{"name": "oracle", "description": "F_U, F_H and f̃ at random points.", "handler": check_forcing}],
    }
