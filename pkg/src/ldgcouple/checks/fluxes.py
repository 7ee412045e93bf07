"""Algebraic properties of the numerical fluxes on randomized traces."""

import logging
import math
from typing import Any

import numpy as np

from ..dgcore import jump_avg
from ..freeflow import compute_lambda_u, flux_R_H, flux_R_U, flux_S_Q, flux_S_U
from . import CheckOutcome

logger = logging.getLogger(__name__)

SAMPLES = 10**6
LEMMA_SLOPE = (math.sqrt(2.0) + 1.0) / math.sqrt(2.0)
LEMMA_OFFSET = 1.0 / math.sqrt(2.0)


def lambda_bound_margin(un_owner: np.ndarray, un_neighbor: np.ndarray) -> float:
    """Smallest λ_U minus its lower bound, over inflow and interior evaluations (>= -1 ulp when the bound holds)."""
    margin = math.inf
    for lam, speed in (
        (compute_lambda_u("inflow", un_owner), np.abs(un_owner)),
        (compute_lambda_u("lat", un_owner, un_neighbor), 0.5 * (np.abs(un_owner) + np.abs(un_neighbor))),
    ):
        bound = LEMMA_SLOPE * speed + LEMMA_OFFSET
        margin = min(margin, float(np.min((lam - bound) / np.spacing(bound))))
    return margin


def check_lambda_bound(seed: int) -> CheckOutcome:
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-1e3, 1e3, (2, SAMPLES))
    margin = lambda_bound_margin(a, b)
    return CheckOutcome(margin >= -1.0, f"min margin {margin:.3g} ulp over {SAMPLES} samples")


def check_jump_products(seed: int) -> CheckOutcome:
    """[[a c]] = {a}[[c]] + [[a]]{c} and {a c} = {a}{c} + [[a]]·[[c]]/4 for scalar traces."""
    rng = np.random.default_rng(seed + 1)
    a1, a2, c1, c2 = rng.normal(size=(4, 1000))
    normal = rng.normal(size=(1000, 2))
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    avg_ac, jump_ac = jump_avg(a1 * c1, a2 * c2, normal)
    avg_a, jump_a = jump_avg(a1, a2, normal)
    avg_c, jump_c = jump_avg(c1, c2, normal)
    err_jump = float(np.max(np.abs(jump_ac - (avg_a[:, None] * jump_c + jump_a * avg_c[:, None]))))
    err_avg = float(np.max(np.abs(avg_ac - (avg_a * avg_c + 0.25 * np.sum(jump_a * jump_c, axis=-1)))))
    return CheckOutcome(max(err_jump, err_avg) < 1e-13, f"max deviation jump {err_jump:.2e}, average {err_avg:.2e}")


def conservativity_defect(rng: np.random.Generator, n: int = 1000) -> dict[str, float]:
    """Owner flux plus neighbour flux (neighbour sees -n and swapped traces) on interior faces."""
    uo, un, xi, wo, wn, qxo, qzo, qxn, qzn = rng.normal(size=(9, n))
    nx, nz = rng.normal(size=(2, n))
    norm = np.hypot(nx, nz)
    nx, nz = nx / norm, nz / norm
    lam = compute_lambda_u("lat", uo * nx, un * nx)
    lam_back = compute_lambda_u("lat", un * -nx, uo * -nx)
    xin = rng.normal(size=n)
    below = uo * nx + wo * nz
    defects = {
        "R_H": flux_R_H("lat", nx, uo, un) + flux_R_H("lat", -nx, un, uo),
        "R_H penalised": flux_R_H("lat", nx, uo, un, lam=lam, xi_jump=xi - xin)
        + flux_R_H("lat", -nx, un, uo, lam=lam_back, xi_jump=xin - xi),
        "R_U lat": flux_R_U("lat", nx, uo, xi, u_neighbor=un, xi_neighbor=xin, lam=lam)
        + flux_R_U("lat", -nx, un, xin, u_neighbor=uo, xi_neighbor=xi, lam=lam_back),
        # Horizontal faces share one column, hence one elevation.
        "R_U horiz": flux_R_U("horiz", nx, uo, xi, u_neighbor=un, advective_normal=below)
        + flux_R_U("horiz", -nx, un, xi, u_neighbor=uo, advective_normal=-below),
        "S_U": flux_S_U("lat", (nx, nz), (qxo, qzo), q_neighbor=(qxn, qzn))
        + flux_S_U("lat", (-nx, -nz), (qxn, qzn), q_neighbor=(qxo, qzo)),
        "S_Q": flux_S_Q("horiz", wo, wn) * nx + flux_S_Q("horiz", wn, wo) * -nx,
    }
    return {name: float(np.max(np.abs(value))) for name, value in defects.items()}


def check_flux_conservativity(seed: int) -> CheckOutcome:
    defects = conservativity_defect(np.random.default_rng(seed + 2))
    worst = max(defects.values())
    return CheckOutcome(worst < 1e-13, ", ".join(f"{k}={v:.1e}" for k, v in defects.items()))


def get_check_definition() -> dict[str, Any]:
    return {
        "name": "fluxes",
        "description": "Penalty bound, jump identities and pairwise conservativity of face fluxes.",
        "checks": [
            {"name": "lambda_bound", "description": "λ_U lower bound on random traces.", "handler": check_lambda_bound},
            {"name": "jump_products", "description": "Product rule for jumps and averages.", "handler": check_jump_products},
            {
                "name": "conservativity",
                "description": "Interior fluxes cancel between the two sides of a face.",
                "handler": check_flux_conservativity,
            },
        ],
    }
