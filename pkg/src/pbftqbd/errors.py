"""Exception hierarchy shared by the analytic engine, oracle and simulator."""

from __future__ import annotations


class PBFTModelError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(PBFTModelError, ValueError):
    """A model parameter is outside its admissible range."""

    def __init__(self, name: str, value: object, requirement: str) -> None:
        self.name = name
        self.value = value
        super().__init__(f"{name}={value!r} is invalid: {requirement}")


class ArrivalRateError(ParameterError):
    pass


class ServiceRateError(ParameterError):
    pass


class ByzantineCountError(ParameterError):
    pass


class RewardError(ParameterError):
    pass


class StabilityError(PBFTModelError):
    """The QBD is not positive recurrent (rho >= 1)."""

    def __init__(self, rho: float) -> None:
        self.rho = rho
        super().__init__(f"unstable instance: rho={rho!r} >= 1")


class IterationLimitError(PBFTModelError):
    """The rate-matrix iteration did not meet its stopping rule in time."""

    def __init__(self, iterations: int, step: float, residual: float) -> None:
        self.iterations = iterations
        self.step = step
        self.residual = residual
        super().__init__(
            f"rate matrix not converged after {iterations} iterations "
            f"(last step {step:.3e}, residual {residual:.3e})"
        )


class SingularSystemError(PBFTModelError):
    """A linear system is singular or numerically rank deficient."""

    def __init__(self, what: str, rcond: float) -> None:
        self.what = what
        self.rcond = rcond
        super().__init__(f"{what} is numerically singular (rcond={rcond:.3e})")


class TruncationError(PBFTModelError):
    """The truncated chain keeps too much mass in its last level."""

    def __init__(self, level_cap: int, tail_mass: float, threshold: float) -> None:
        self.level_cap = level_cap
        self.tail_mass = tail_mass
        self.threshold = threshold
        super().__init__(
            f"tail mass {tail_mass:.3e} at level {level_cap} exceeds {threshold:.1e}; "
            "increase the level cap"
        )


class SimConfigError(PBFTModelError, ValueError):
    """Invalid simulation configuration."""
