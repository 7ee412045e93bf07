"""Exception types raised by the solver library."""


class LdgError(Exception):
    """Base class for all errors raised by ldgcouple."""


class ConfigError(LdgError, ValueError):
    """Invalid or inconsistent run configuration."""


class MeshError(LdgError, ValueError):
    """Mesh construction or movement violated a geometric invariant."""


class SolveError(LdgError, ArithmeticError):
    """A local solve failed or required face data was not supplied."""


class MmsError(LdgError, ValueError):
    """Unknown manufactured-solution field or unsupported MMS parameters."""


class InstabilityError(LdgError, RuntimeError):
    """The explicit time loop blew up (CFL violation or non-finite values)."""

    def __init__(self, message: str, step: int, time: float) -> None:
        super().__init__(f"{message} (step {step}, t={time:.6g})")
        self.step = step
        self.time = time
