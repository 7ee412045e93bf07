"""Handles run configuration from TOML files, environment variables and CLI arguments."""

import argparse
import logging
import math
import os
import tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Literal

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Define literal types for choices to improve type checking
LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
LogFormat = Literal["text", "json"]
Scenario = Literal["mms", "rest", "bump"]
FrictionLaw = Literal["linear", "quadratic"]
InflowSide = Literal["left", "right", "none"]
BcMode = Literal["physical", "mms-dirichlet"]
PceFlux = Literal["central", "lax-friedrichs"]
DarcySideType = Literal["dirichlet", "neumann"]

DEFAULT_LOG_LEVEL: LogLevel = "INFO"
DEFAULT_LOG_FORMAT: LogFormat = "text"
DEFAULT_SCENARIO: Scenario = "mms"
DEFAULT_OUTPUT_DIR = Path("output")
DEFAULT_END_TIME = 10.0
DEFAULT_SUBCYCLES = 10
DEFAULT_DIFFUSION = (0.05, 0.0, 0.05)
DEFAULT_CONDUCTIVITY = (0.01, 0.0, 0.01)
DEFAULT_FRICTION = 0.01
DEFAULT_PENALTY = 1.0

BC_FACE_CLASSES = ("top", "bottom", "inflow", "outflow")
DARCY_SIDES = ("left", "right", "bottom")

# Dotted TOML keys that do not map onto a field of the same (last-segment) name.
_KEY_ALIASES = {
    "subsurface.order": "darcy_order",
    "subsurface.dt": "dt_darcy",
    "freeflow.friction.law": "friction_law",
    "freeflow.friction.coefficient": "friction",
}
_SECTIONS = ("run", "mesh", "freeflow", "subsurface", "boundary")


@dataclass
class RunConfig:
    """Holds all settings of one simulation run."""

    scenario: Scenario = DEFAULT_SCENARIO

    # Domain and mesh
    x_min: float = 0.0
    x_max: float = 100.0
    z_bottom: float = -5.0
    bed_slope: float = 0.005
    z_b_offset: float = 0.0
    refinement: int = 1
    columns: int | None = None  # None -> 2^(j+1)
    layers: int | None = None  # None -> 2^j
    darcy_layers: int | None = None  # None -> 2^j

    # Polynomial orders; None -> derived from ``order``
    order: int = 1
    xi_order: int | None = None
    u_order: int | None = None
    w_order: int | None = None
    darcy_order: int | None = None

    # Time stepping; None -> step sizes of the convergence study
    dt: float | None = None
    dt_darcy: float | None = None
    subcycles: int = DEFAULT_SUBCYCLES
    end_time: float = DEFAULT_END_TIME

    # Physics
    gravity: float = 1.0
    diffusion: tuple[float, float, float] = DEFAULT_DIFFUSION  # (xx, xz, zz)
    conductivity: tuple[float, float, float] = DEFAULT_CONDUCTIVITY
    friction_law: FrictionLaw = "linear"
    friction: float = DEFAULT_FRICTION
    penalty: float = DEFAULT_PENALTY
    mesh_penalty: bool = True
    pce_flux: PceFlux | None = None  # None -> lax-friedrichs for mms, central otherwise

    # Scenario data
    rest_level: float = 5.0
    bump_amplitude: float = 0.01
    bump_width: float = 10.0
    inflow_side: InflowSide = "left"
    bc_modes: dict[str, BcMode] = field(default_factory=dict)
    darcy_sides: dict[str, DarcySideType] = field(default_factory=dict)

    # Run control
    log_level: LogLevel = DEFAULT_LOG_LEVEL
    log_format: LogFormat = DEFAULT_LOG_FORMAT
    output_dir: Path = DEFAULT_OUTPUT_DIR
    seed: int = 0

    # Store the original args for reference if needed
    cli_args: argparse.Namespace = field(default_factory=argparse.Namespace, repr=False)

    def resolved_columns(self) -> int:
        return self.columns if self.columns is not None else 2 ** (self.refinement + 1)

    def resolved_layers(self) -> int:
        return self.layers if self.layers is not None else 2**self.refinement

    def resolved_darcy_layers(self) -> int:
        return self.darcy_layers if self.darcy_layers is not None else 2**self.refinement

    def orders(self) -> dict[str, int]:
        """Polynomial order per unknown: xi, u, w, q, head, flux."""
        p = self.order
        darcy = self.darcy_order if self.darcy_order is not None else p
        u = self.u_order if self.u_order is not None else p
        return {
            "xi": self.xi_order if self.xi_order is not None else 2 * p,
            "u": u,
            "w": self.w_order if self.w_order is not None else 2 * p,
            "q": u,
            "head": darcy,
            "flux": darcy,
        }

    def quad_degree(self) -> int:
        return 2 * max(self.orders().values()) + 4

    def table_steps(self) -> tuple[float, float]:
        """Free-flow and Darcy step sizes (1/50, 1/5) * 2^-p * 4^-j."""
        scale = 2.0 ** (-self.order) * 4.0 ** (-self.refinement)
        return scale / 50.0, scale / 5.0

    def steps(self) -> tuple[float, float]:
        """Effective (dt, dt_darcy)."""
        dt_table, _ = self.table_steps()
        dt = self.dt if self.dt is not None else dt_table
        dt_darcy = self.dt_darcy if self.dt_darcy is not None else self.subcycles * dt
        return dt, dt_darcy

    def n_coupled_steps(self) -> int:
        _, dt_darcy = self.steps()
        return int(round(self.end_time / dt_darcy))

    def bathymetry(self, x: np.ndarray) -> np.ndarray:
        return self.bed_slope * np.asarray(x, dtype=float) + self.z_b_offset

    def boundary_modes(self) -> dict[str, BcMode]:
        default: BcMode = "mms-dirichlet" if self.scenario == "mms" else "physical"
        return {name: self.bc_modes.get(name, default) for name in BC_FACE_CLASSES}

    def resolved_pce_flux(self) -> PceFlux:
        if self.pce_flux is not None:
            return self.pce_flux
        return "lax-friedrichs" if self.scenario == "mms" else "central"

    def darcy_side_types(self) -> dict[str, DarcySideType]:
        default: DarcySideType = "dirichlet" if self.scenario == "mms" else "neumann"
        return {side: self.darcy_sides.get(side, default) for side in DARCY_SIDES}

    def diffusion_tensor(self) -> np.ndarray:
        return _tensor(self.diffusion)

    def conductivity_tensor(self) -> np.ndarray:
        return _tensor(self.conductivity)

    def validate(self) -> "RunConfig":
        """Raise ConfigError on inconsistent settings; returns self for chaining."""
        for name, value in self.orders().items():
            if value < 0:
                raise ConfigError(f"Order for '{name}' must be non-negative, got {value}")
        if self.refinement < 0:
            raise ConfigError(f"Refinement level must be non-negative, got {self.refinement}")
        if self.end_time < 0.0:
            raise ConfigError(f"End time must be non-negative, got {self.end_time}")
        if not isinstance(self.subcycles, int) or self.subcycles < 1:
            raise ConfigError(f"Subcycle count must be a positive integer, got {self.subcycles}")
        dt, dt_darcy = self.steps()
        if dt <= 0.0 or dt_darcy <= 0.0:
            raise ConfigError(f"Time steps must be positive, got dt={dt}, dt_darcy={dt_darcy}")
        if not math.isclose(dt_darcy, self.subcycles * dt, rel_tol=1e-12):
            raise ConfigError(f"dt_darcy ({dt_darcy}) must equal subcycles * dt ({self.subcycles} * {dt})")
        if self.end_time > 0.0 and not math.isclose(self.n_coupled_steps() * dt_darcy, self.end_time, rel_tol=1e-9):
            raise ConfigError(f"End time {self.end_time} is not a multiple of dt_darcy {dt_darcy}")
        if self.penalty <= 0.0:
            raise ConfigError(f"Penalty must be positive, got {self.penalty}")
        if self.friction < 0.0:
            raise ConfigError(f"Friction coefficient must be non-negative, got {self.friction}")
        if self.x_max <= self.x_min:
            raise ConfigError(f"Empty domain [{self.x_min}, {self.x_max}]")
        for label, tensor in (("diffusion", self.diffusion), ("conductivity", self.conductivity)):
            if np.any(np.linalg.eigvalsh(_tensor(tensor)) <= 0.0):
                raise ConfigError(f"The {label} tensor {tensor} is not positive definite")
        if self.scenario == "mms" and self.gravity != 1.0:
            raise ConfigError("The manufactured solution is only defined for gravity = 1")
        for name, mode in self.bc_modes.items():
            if name not in BC_FACE_CLASSES or mode not in get_args(BcMode):
                raise ConfigError(f"Invalid boundary mode {name}={mode}")
            if mode == "mms-dirichlet" and self.scenario != "mms":
                raise ConfigError(f"Boundary mode {name}=mms-dirichlet needs the mms scenario")
        if self.pce_flux is not None and self.pce_flux not in get_args(PceFlux):
            raise ConfigError(f"Invalid PCE flux '{self.pce_flux}'")
        for side, kind in self.darcy_sides.items():
            if side not in DARCY_SIDES or kind not in get_args(DarcySideType):
                raise ConfigError(f"Invalid Darcy side {side}={kind}")
        return self


def _tensor(values: tuple[float, float, float]) -> np.ndarray:
    xx, xz, zz = values
    return np.array([[xx, xz], [xz, zz]], dtype=float)


def _flatten(table: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in table.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict) and not dotted.endswith(("sides", "modes")):
            flat.update(_flatten(value, dotted))
        else:
            flat[dotted] = value
    return flat


def _apply(config: RunConfig, dotted: str, value: Any) -> None:
    names = {f.name: f for f in fields(RunConfig)}
    if dotted in ("subsurface.sides", "boundary.modes"):
        target = config.darcy_sides if dotted == "subsurface.sides" else config.bc_modes
        target.update({str(k): str(v) for k, v in value.items()})  # type: ignore[misc]
        return
    section, _, _ = dotted.partition(".")
    name = _KEY_ALIASES.get(dotted, dotted.rsplit(".", 1)[-1])
    if section not in _SECTIONS or name not in names or name == "cli_args":
        raise ConfigError(f"Unknown configuration key '{dotted}'")
    if name in ("diffusion", "conductivity"):
        if isinstance(value, int | float):
            value = (float(value), 0.0, float(value))
        value = tuple(float(v) for v in value)
        if len(value) != 3:
            raise ConfigError(f"'{dotted}' needs three entries (xx, xz, zz) or one scalar")
    elif name == "output_dir":
        value = Path(value)
    setattr(config, name, value)


def load_config_file(path: Path, config: RunConfig | None = None) -> RunConfig:
    """Read a TOML file of dotted keys (``mesh.refinement = 2``) into a RunConfig."""
    config = config if config is not None else RunConfig()
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"Configuration file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed configuration file {path}: {e}") from e
    for dotted, value in _flatten(raw).items():
        _apply(config, dotted, value)
    logger.debug(f"Loaded configuration file {path}")
    return config


def load_configuration(args: argparse.Namespace) -> RunConfig:
    """
    Loads configuration: defaults, then the config file, then LDG_* environment
    variables, then CLI arguments.
    """
    # Start with defaults
    config = RunConfig()

    config_path = getattr(args, "config", None)
    if config_path is not None:
        load_config_file(Path(config_path), config)

    # Apply environment variables
    env_log_level = os.getenv("LDG_LOG_LEVEL")
    if env_log_level and env_log_level.upper() in get_args(LogLevel):
        config.log_level = env_log_level.upper()  # type: ignore

    env_log_format = os.getenv("LDG_LOG_FORMAT")
    if env_log_format and env_log_format.lower() in get_args(LogFormat):
        config.log_format = env_log_format.lower()  # type: ignore

    env_output = os.getenv("LDG_OUTPUT_DIR")
    if env_output:
        config.output_dir = Path(env_output)

    # Override with CLI arguments if they were provided
    if getattr(args, "log_level", None) is not None:
        config.log_level = args.log_level

    if getattr(args, "log_format", None) is not None:
        config.log_format = args.log_format

    if getattr(args, "output_dir", None) is not None:
        config.output_dir = Path(args.output_dir)

    if getattr(args, "end_time", None) is not None:
        config.end_time = args.end_time

    config.cli_args = args  # Store the parsed args
    return config


# Helper to get Literal values for argparse choices if needed elsewhere
def get_args(literal_type: object) -> tuple[str, ...]:
    """Extracts arguments from a Literal type."""
    return getattr(literal_type, "__args__", ())
