"""Exception types shared across the package."""


class WheeloptError(Exception):
    """Base class for all package errors."""


class ConfigError(WheeloptError):
    """Invalid or inconsistent configuration."""


class ValidationError(WheeloptError):
    """A design vector violates its bounds."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class CapacityError(WheeloptError):
    """Requested discretization exceeds the configured particle cap."""


class CflError(WheeloptError):
    """Requested time step violates the CFL limit."""

    def __init__(self, dt, dt_required):
        self.dt = dt
        self.dt_required = dt_required
        super().__init__(
            f"dt={dt:.3e} s violates the CFL limit; required dt <= {dt_required:.3e} s"
        )


class NumericalBlowupError(WheeloptError):
    """A field became non-finite during integration."""


class GenerationError(WheeloptError):
    """Procedural generation (e.g. racetrack relaxation) failed to converge."""


class StrategyError(WheeloptError):
    """A multi-stage optimization strategy cannot proceed."""


class ResumeMismatchError(WheeloptError):
    """Results log does not match the configuration it is resumed with."""
