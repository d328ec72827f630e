"""Parameter types for the granular SPH solver.

Units are SI throughout (m, kg, s, Pa).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass
class MaterialParams:
    """Elasto-plastic granular material.

    The yield strength is pressure-dependent friction, mu(I)*p + cohesion,
    with mu interpolating between ``mu_s`` (quasi-static) and ``mu_2``
    (rapid flow) through the inertial number I.  With ``mu_s == mu_2`` the
    friction is rate-independent and ``I0``/``grain_d`` are inert.
    """

    rho0: float = 1700.0        # reference density, kg/m^3
    mu_s: float = 0.6           # static friction coefficient
    mu_2: float = 0.6           # limiting friction coefficient
    I0: float = 0.279           # inertial-number scale
    grain_d: float = 1.0e-3     # characteristic grain diameter, m
    cohesion: float = 0.0       # shear strength offset, Pa
    K: float = 5.0e5            # bulk modulus, Pa
    G: float = 2.5e5            # shear modulus, Pa

    def __post_init__(self):
        if self.rho0 <= 0:
            raise ConfigError("rho0 must be positive")
        if not (0 < self.mu_s <= self.mu_2):
            raise ConfigError("friction must satisfy 0 < mu_s <= mu_2")
        if self.K <= 0 or self.G <= 0:
            raise ConfigError("elastic moduli must be positive")
        if self.cohesion < 0:
            raise ConfigError("cohesion must be non-negative")
        if self.grain_d <= 0 or self.I0 <= 0:
            raise ConfigError("grain_d and I0 must be positive")

    @property
    def sound_speed(self) -> float:
        """P-wave speed sqrt((K + 4G/3) / rho0) used by the CFL rule."""
        return math.sqrt((self.K + 4.0 * self.G / 3.0) / self.rho0)

    @property
    def k0_lateral(self) -> float:
        """Lateral earth-pressure coefficient 1 - sin(atan(mu_s))."""
        return 1.0 - math.sin(math.atan(self.mu_s))


@dataclass
class KernelSpec:
    """Cubic-spline kernel geometry: smoothing length is 1.2x the spacing."""

    d0: float
    h: float = field(init=False)
    support: float = field(init=False)

    def __post_init__(self):
        if self.d0 <= 0:
            raise ConfigError("particle spacing d0 must be positive")
        self.h = 1.2 * self.d0
        self.support = 2.0 * self.h


@dataclass
class TerrainPatch:
    """Rectangular soil patch, surface at z = 0, soil filling z in [-depth, 0]."""

    length: float
    width: float
    depth: float
    spacing: float
    material: MaterialParams = field(default_factory=MaterialParams)
    gravity: tuple = (0.0, 0.0, -9.81)

    def __post_init__(self):
        if min(self.length, self.width, self.depth) <= 0:
            raise ConfigError("patch extents must be positive")
        if self.spacing <= 0:
            raise ConfigError("spacing must be positive")
        for name, extent in (("length", self.length), ("width", self.width),
                             ("depth", self.depth)):
            n = extent / self.spacing
            if abs(n - round(n)) > 0.5 + 1e-9:
                raise ConfigError(
                    f"spacing does not divide {name} to within one cell")

    @property
    def counts(self) -> tuple:
        return (int(round(self.length / self.spacing)),
                int(round(self.width / self.spacing)),
                int(round(self.depth / self.spacing)))

    @property
    def particle_count(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz

    @property
    def gravity_vec(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=np.float64)


@dataclass
class SolverConfig:
    """Numerical knobs of the SPH solver."""

    dt: float | None = 2.0e-4        # None -> derive from the CFL rule
    alpha_visc: float = 0.2          # Monaghan artificial viscosity
    skin: float = 0.1                # neighbor-cutoff padding, fraction of support
    cfl_safety: float = 0.25
    particle_cap: int = 1_000_000
    velocity_damping: float = 0.0    # 1/s, settling relaxation only
    wall_layers: int = 3
    wall_freeboard: float = 0.04     # container walls extend above the surface, m
    snapshot_interval: float = 0.0   # sim seconds; 0 disables
    threads: int = 0                 # numba threads; 0 -> leave untouched

    def __post_init__(self):
        if self.skin < 0:
            raise ConfigError("skin must be non-negative")
        if self.wall_layers < 3:
            raise ConfigError("boundary markers need at least 3 layers")
