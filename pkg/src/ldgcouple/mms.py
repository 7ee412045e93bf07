"""
Manufactured solution for the coupled free-surface / Darcy system.

All fields and derivatives are closed-form and vectorised over numpy arrays. The
horizontal velocity vanishes on the bathymetry and the vertical velocity is built
divergence-free, with a shift so that the normal flux matches the Darcy flux at the
interface. Forcing terms are the residuals of the continuous equations evaluated at
the analytic solution.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import MmsError

logger = logging.getLogger(__name__)

BED_SLOPE = 0.005
MMS_DIFFUSION = 0.05
MMS_CONDUCTIVITY = 0.01
# Coefficients of the interface shift, kept as written for D~ = 0.01 I and slope 0.005.
_SHIFT_CONDUCTIVITY = 0.01
_SHIFT_SLOPE = 0.005

Array = np.ndarray


def _isotropic(value: float) -> Array:
    return np.array([[value, 0.0], [0.0, value]])


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form fields, helpers and derivatives; ``diffusion``/``conductivity`` enter the forcing only."""

    diffusion: Array = field(default_factory=lambda: _isotropic(MMS_DIFFUSION))
    conductivity: Array = field(default_factory=lambda: _isotropic(MMS_CONDUCTIVITY))
    gravity: float = 1.0

    def __post_init__(self) -> None:
        if self.gravity != 1.0:
            raise MmsError(f"The manufactured solution requires gravity = 1, got {self.gravity}")

    # Surface elevation -------------------------------------------------------------

    @staticmethod
    def z_b(x: Array) -> Array:
        return BED_SLOPE * np.asarray(x, dtype=float)

    @staticmethod
    def xi(t: float, x: Array) -> Array:
        return 5.0 + 0.003 * np.sin(0.08 * x + 0.08 * t)

    @staticmethod
    def xi_t(t: float, x: Array) -> Array:
        return 0.00024 * np.cos(0.08 * x + 0.08 * t)

    @staticmethod
    def xi_x(t: float, x: Array) -> Array:
        return 0.00024 * np.cos(0.08 * x + 0.08 * t)

    @staticmethod
    def xi_xx(t: float, x: Array) -> Array:
        return -0.0000192 * np.sin(0.08 * x + 0.08 * t)

    # Helpers r, m ------------------------------------------------------------------

    @staticmethod
    def r(t: float, x: Array) -> Array:
        return np.sin(0.07 * x + 0.4 * t)

    @staticmethod
    def r_x(t: float, x: Array) -> Array:
        return 0.07 * np.cos(0.07 * x + 0.4 * t)

    @staticmethod
    def r_t(t: float, x: Array) -> Array:
        return 0.4 * np.cos(0.07 * x + 0.4 * t)

    @staticmethod
    def r_xx(t: float, x: Array) -> Array:
        return -0.0049 * np.sin(0.07 * x + 0.4 * t)

    @staticmethod
    def r_xt(t: float, x: Array) -> Array:
        return -0.028 * np.sin(0.07 * x + 0.4 * t)

    @staticmethod
    def m(t: float, x: Array) -> Array:
        return np.cos(0.07 * x + 0.07 * t)

    @staticmethod
    def m_x(t: float, x: Array) -> Array:
        return -0.07 * np.sin(0.07 * x + 0.07 * t)

    @staticmethod
    def m_t(t: float, x: Array) -> Array:
        return -0.07 * np.sin(0.07 * x + 0.07 * t)

    @staticmethod
    def m_xx(t: float, x: Array) -> Array:
        return -0.0049 * np.cos(0.07 * x + 0.07 * t)

    # Horizontal velocity -----------------------------------------------------------

    def u(self, t: float, x: Array, z: Array) -> Array:
        return self.r(t, x) * (np.cos(0.1 * z) - np.cos(0.1 * self.z_b(x)))

    def u_t(self, t: float, x: Array, z: Array) -> Array:
        return self.r_t(t, x) * (np.cos(0.1 * z) - np.cos(0.1 * self.z_b(x)))

    def u_x(self, t: float, x: Array, z: Array) -> Array:
        sb = np.sin(0.1 * self.z_b(x))
        return self.r_x(t, x) * (np.cos(0.1 * z) - np.cos(0.1 * self.z_b(x))) + 0.1 * BED_SLOPE * self.r(t, x) * sb

    def u_z(self, t: float, x: Array, z: Array) -> Array:
        return -0.1 * self.r(t, x) * np.sin(0.1 * z)

    def u_xx(self, t: float, x: Array, z: Array) -> Array:
        k = 0.1 * BED_SLOPE
        cb = np.cos(0.1 * self.z_b(x))
        sb = np.sin(0.1 * self.z_b(x))
        return (
            self.r_xx(t, x) * (np.cos(0.1 * z) - cb)
            + 2.0 * k * self.r_x(t, x) * sb
            + k * k * self.r(t, x) * cb
        )

    def u_xz(self, t: float, x: Array, z: Array) -> Array:
        return -0.1 * self.r_x(t, x) * np.sin(0.1 * z)

    def u_zz(self, t: float, x: Array, z: Array) -> Array:
        return -0.01 * self.r(t, x) * np.cos(0.1 * z)

    # Vertical velocity -------------------------------------------------------------

    def n(self, t: float, x: Array, z: Array) -> Array:
        zb = self.z_b(x)
        return -self.r_x(t, x) * (np.sin(0.1 * z) / 0.1 - z * np.cos(0.1 * zb)) - 0.1 * BED_SLOPE * self.r(
            t, x
        ) * z * np.sin(0.1 * zb)

    def n_z(self, t: float, x: Array, z: Array) -> Array:
        return -self.u_x(t, x, z)

    def eps(self, t: float, x: Array) -> Array:
        zb = self.z_b(x)
        return _SHIFT_CONDUCTIVITY * (
            _SHIFT_SLOPE * self.head_x(t, x, zb) - self.head_z(t, x, zb)
        ) - self.n(t, x, zb)

    def w(self, t: float, x: Array, z: Array) -> Array:
        return self.n(t, x, z) + self.eps(t, x)

    def w_z(self, t: float, x: Array, z: Array) -> Array:
        return self.n_z(t, x, z)

    # Hydraulic head ----------------------------------------------------------------

    def head(self, t: float, x: Array, z: Array) -> Array:
        return self.xi(t, x) + (np.sin(0.3 * z) - np.sin(0.3 * self.z_b(x))) * self.m(t, x)

    def head_t(self, t: float, x: Array, z: Array) -> Array:
        return self.xi_t(t, x) + (np.sin(0.3 * z) - np.sin(0.3 * self.z_b(x))) * self.m_t(t, x)

    def head_x(self, t: float, x: Array, z: Array) -> Array:
        k = 0.3 * BED_SLOPE
        zb = self.z_b(x)
        return (
            self.xi_x(t, x)
            - k * np.cos(0.3 * zb) * self.m(t, x)
            + (np.sin(0.3 * z) - np.sin(0.3 * zb)) * self.m_x(t, x)
        )

    def head_z(self, t: float, x: Array, z: Array) -> Array:
        return 0.3 * np.cos(0.3 * z) * self.m(t, x)

    def head_xx(self, t: float, x: Array, z: Array) -> Array:
        k = 0.3 * BED_SLOPE
        zb = self.z_b(x)
        return (
            self.xi_xx(t, x)
            + k * k * np.sin(0.3 * zb) * self.m(t, x)
            - 2.0 * k * np.cos(0.3 * zb) * self.m_x(t, x)
            + (np.sin(0.3 * z) - np.sin(0.3 * zb)) * self.m_xx(t, x)
        )

    def head_xz(self, t: float, x: Array, z: Array) -> Array:
        return 0.3 * np.cos(0.3 * z) * self.m_x(t, x)

    def head_zz(self, t: float, x: Array, z: Array) -> Array:
        return -0.09 * np.sin(0.3 * z) * self.m(t, x)

    # Fluxes ------------------------------------------------------------------------

    def stress(self, t: float, x: Array, z: Array) -> tuple[Array, Array]:
        """Q = -D grad u."""
        gx, gz = self.u_x(t, x, z), self.u_z(t, x, z)
        d = self.diffusion
        return -(d[0, 0] * gx + d[0, 1] * gz), -(d[1, 0] * gx + d[1, 1] * gz)

    def seepage(self, t: float, x: Array, z: Array) -> tuple[Array, Array]:
        """Darcy velocity -D~ grad h."""
        gx, gz = self.head_x(t, x, z), self.head_z(t, x, z)
        d = self.conductivity
        return -(d[0, 0] * gx + d[0, 1] * gz), -(d[1, 0] * gx + d[1, 1] * gz)

    # Forcing -----------------------------------------------------------------------

    def momentum_source(self, t: float, x: Array, z: Array) -> Array:
        u, w = self.u(t, x, z), self.w(t, x, z)
        ux, uz = self.u_x(t, x, z), self.u_z(t, x, z)
        d = self.diffusion
        div_flux = -(
            d[0, 0] * self.u_xx(t, x, z) + (d[0, 1] + d[1, 0]) * self.u_xz(t, x, z) + d[1, 1] * self.u_zz(t, x, z)
        )
        advection = 2.0 * u * ux + uz * w + u * self.w_z(t, x, z)
        return self.u_t(t, x, z) + advection + div_flux + self.gravity * self.xi_x(t, x)

    def pce_source(self, t: float, x: Array) -> Array:
        """d_t xi + d_x (int u dz) + (u z_b' - w)|_{z_b}, evaluated in kinematic form."""
        top = self.xi(t, x)
        return self.xi_t(t, x) + self.u(t, x, top) * self.xi_x(t, x) - self.w(t, x, top)

    def darcy_source(self, t: float, x: Array, z: Array) -> Array:
        d = self.conductivity
        div_flux = -(
            d[0, 0] * self.head_xx(t, x, z)
            + (d[0, 1] + d[1, 0]) * self.head_xz(t, x, z)
            + d[1, 1] * self.head_zz(t, x, z)
        )
        return self.head_t(t, x, z) + div_flux

    def continuity_residual(self, t: float, x: Array, z: Array) -> Array:
        return self.u_x(t, x, z) + self.w_z(t, x, z)

    def pce_source_by_quadrature(self, t: float, x: float, step: float = 1e-5) -> float:
        """PCE source from the depth-integral form, by adaptive quadrature and central differences."""

        def depth_integral(xx: float) -> float:
            value, _ = integrate.quad(lambda zz: float(self.u(t, xx, zz)), float(self.z_b(xx)), float(self.xi(t, xx)))
            return value

        flux_x = (depth_integral(x + step) - depth_integral(x - step)) / (2.0 * step)
        zb = float(self.z_b(x))
        bottom = float(self.u(t, x, zb)) * BED_SLOPE - float(self.w(t, x, zb))
        return float(self.xi_t(t, x)) + flux_x + bottom


_EXACT: dict[str, Callable[..., Array]] = {
    "xi": lambda s, t, x, z: s.xi(t, x),
    "u": lambda s, t, x, z: s.u(t, x, z),
    "w": lambda s, t, x, z: s.w(t, x, z),
    "head": lambda s, t, x, z: s.head(t, x, z),
    "flux_x": lambda s, t, x, z: s.seepage(t, x, z)[0],
    "flux_z": lambda s, t, x, z: s.seepage(t, x, z)[1],
    "q_x": lambda s, t, x, z: s.stress(t, x, z)[0],
    "q_z": lambda s, t, x, z: s.stress(t, x, z)[1],
    "r": lambda s, t, x, z: s.r(t, x),
    "m": lambda s, t, x, z: s.m(t, x),
    "n": lambda s, t, x, z: s.n(t, x, z),
    "eps": lambda s, t, x, z: s.eps(t, x),
}

_FORCING: dict[str, Callable[..., Array]] = {
    "momentum": lambda s, t, x, z: s.momentum_source(t, x, z),
    "pce": lambda s, t, x, z: s.pce_source(t, x),
    "darcy": lambda s, t, x, z: s.darcy_source(t, x, z),
    "continuity": lambda s, t, x, z: s.continuity_residual(t, x, z),
}

DEFAULT_SOLUTION = ManufacturedSolution()


def eval_exact(
    name: str, t: float, x: Array | float, z: Array | float = 0.0, solution: ManufacturedSolution | None = None
) -> Array:
    """Evaluate one analytic field (``xi``, ``u``, ``w``, ``head``, ``flux_x``, ``flux_z``, ...)."""
    if name not in _EXACT:
        raise MmsError(f"Unknown manufactured field '{name}'. Known: {', '.join(sorted(_EXACT))}")
    return _EXACT[name](solution or DEFAULT_SOLUTION, t, np.asarray(x, dtype=float), np.asarray(z, dtype=float))


def eval_forcing(
    name: str, t: float, x: Array | float, z: Array | float = 0.0, solution: ManufacturedSolution | None = None
) -> Array:
    """Evaluate one forcing term (``momentum``, ``pce``, ``darcy``, ``continuity``)."""
    if name not in _FORCING:
        raise MmsError(f"Unknown equation '{name}'. Known: {', '.join(sorted(_FORCING))}")
    return _FORCING[name](solution or DEFAULT_SOLUTION, t, np.asarray(x, dtype=float), np.asarray(z, dtype=float))
