"""Particle and boundary-marker state containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CapacityError
from . import tensors
from .params import KernelSpec, MaterialParams, TerrainPatch


@dataclass
class SoilParticle:
    """Single-particle view, mainly for inspection and tests."""

    x: np.ndarray
    u: np.ndarray
    rho: float
    sigma: np.ndarray  # full 3x3
    mass: float


class ParticleSet:
    """Structure-of-arrays soil state.

    Attributes
    ----------
    pos, vel : (n, 3) float64
    rho : (n,) float64
    sigma : (n, 6) float64, Voigt [xx, yy, zz, xy, xz, yz]
    mass : float, identical for every particle (rho0 * d0**3)
    """

    def __init__(self, pos, vel, rho, sigma, mass, material: MaterialParams,
                 kernel: KernelSpec):
        self.pos = np.ascontiguousarray(pos, dtype=np.float64)
        self.vel = np.ascontiguousarray(vel, dtype=np.float64)
        self.rho = np.ascontiguousarray(rho, dtype=np.float64)
        self.sigma = np.ascontiguousarray(sigma, dtype=np.float64)
        self.mass = float(mass)
        self.material = material
        self.kernel = kernel

    def __len__(self):
        return self.pos.shape[0]

    @property
    def sigma_full(self):
        return tensors.voigt_to_full(self.sigma)

    def pressure(self):
        return tensors.pressure(self.sigma)

    def tau_bar(self):
        return tensors.tau_bar(self.sigma)

    def total_mass(self):
        return self.mass * len(self)

    def total_volume(self):
        return float(np.sum(self.mass / self.rho))

    def particle(self, i: int) -> SoilParticle:
        return SoilParticle(self.pos[i].copy(), self.vel[i].copy(),
                            float(self.rho[i]),
                            tensors.voigt_to_full(self.sigma[i])[0],
                            self.mass)

    def copy(self):
        return ParticleSet(self.pos.copy(), self.vel.copy(), self.rho.copy(),
                           self.sigma.copy(), self.mass, self.material,
                           self.kernel)


def build_terrain(patch: TerrainPatch, particle_cap: int = 1_000_000
                  ) -> ParticleSet:
    """Lay out a uniform lattice of soil particles with lithostatic stress.

    The soil surface sits at z = 0 and the patch occupies
    [0, L] x [-W/2, W/2] x [-D, 0].  The vertical stress is set to the
    overburden -rho0 g depth and the lateral stress to K0 times that, which
    starts the column close to static equilibrium.
    """
    n_total = patch.particle_count
    if n_total > particle_cap:
        raise CapacityError(
            f"terrain would need {n_total} particles, cap is {particle_cap}")
    d0 = patch.spacing
    nx, ny, nz = patch.counts
    mat = patch.material
    kernel = KernelSpec(d0)

    ix = (np.arange(nx) + 0.5) * d0
    iy = (np.arange(ny) + 0.5) * d0 - patch.width / 2.0
    iz = (np.arange(nz) + 0.5) * d0 - patch.depth
    gx, gy, gz = np.meshgrid(ix, iy, iz, indexing="ij")
    pos = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    g_mag = float(np.linalg.norm(patch.gravity_vec))
    depth = -pos[:, 2]
    szz = -mat.rho0 * g_mag * depth
    k0 = mat.k0_lateral
    sigma = np.zeros((n_total, 6), dtype=np.float64)
    sigma[:, 0] = k0 * szz
    sigma[:, 1] = k0 * szz
    sigma[:, 2] = szz

    vel = np.zeros_like(pos)
    rho = np.full(n_total, mat.rho0, dtype=np.float64)
    mass = mat.rho0 * d0**3
    return ParticleSet(pos, vel, rho, sigma, mass, mat, kernel)


@dataclass
class MarkerSet:
    """Boundary-condition-enforcing markers, all bodies concatenated.

    ``body_id`` indexes the owning rigid body; ``offsets`` are body-frame
    positions, ``pos``/``vel`` the prescribed world kinematics, and the
    ``sigma_ext``/``rho_ext``/``ghost_vel`` fields hold the state
    extrapolated from neighboring soil.
    """

    body_id: np.ndarray
    offsets: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    sigma_ext: np.ndarray = field(default=None)
    rho_ext: np.ndarray = field(default=None)
    ghost_vel: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.pos.shape[0]
        self.body_id = np.ascontiguousarray(self.body_id, dtype=np.int32)
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.float64)
        self.pos = np.ascontiguousarray(self.pos, dtype=np.float64)
        self.vel = np.ascontiguousarray(self.vel, dtype=np.float64)
        if self.sigma_ext is None:
            self.sigma_ext = np.zeros((n, 6), dtype=np.float64)
        if self.rho_ext is None:
            self.rho_ext = np.zeros(n, dtype=np.float64)
        if self.ghost_vel is None:
            self.ghost_vel = np.zeros((n, 3), dtype=np.float64)

    def __len__(self):
        return self.pos.shape[0]

    @staticmethod
    def empty():
        z3 = np.zeros((0, 3), dtype=np.float64)
        return MarkerSet(np.zeros(0, dtype=np.int32), z3.copy(), z3.copy(),
                         z3.copy())

    @staticmethod
    def concat(sets):
        sets = [s for s in sets if len(s) > 0]
        if not sets:
            return MarkerSet.empty()
        return MarkerSet(
            np.concatenate([s.body_id for s in sets]),
            np.vstack([s.offsets for s in sets]),
            np.vstack([s.pos for s in sets]),
            np.vstack([s.vel for s in sets]),
            np.vstack([s.sigma_ext for s in sets]),
            np.concatenate([s.rho_ext for s in sets]),
            np.vstack([s.ghost_vel for s in sets]),
        )


def container_markers(patch: TerrainPatch, layers: int = 3,
                      freeboard: float = 0.04, body_id: int = 0) -> MarkerSet:
    """Static floor-and-walls container surrounding the soil patch.

    The floor extends ``layers`` cells beyond the patch footprint so the
    wall corners are fully backed; walls rise ``freeboard`` above the soil
    surface to contain material pushed up by the wheels.
    """
    d0 = patch.spacing
    L, W, D = patch.length, patch.width, patch.depth
    nx, ny, _ = patch.counts
    half = np.arange(layers) + 0.5

    ix_ext = np.concatenate([-half[::-1], np.arange(nx) + 0.5,
                             nx + half]) * d0
    iy_ext = np.concatenate([-half[::-1], np.arange(ny) + 0.5,
                             ny + half]) * d0 - W / 2.0
    iz_floor = -D - half * d0
    n_up = int(np.ceil((D + freeboard) / d0))
    iz_wall = (np.arange(n_up) + 0.5) * d0 - D

    parts = []
    gx, gy, gz = np.meshgrid(ix_ext, iy_ext, iz_floor, indexing="ij")
    parts.append(np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()]))

    for xw in (-half * d0, L + half * d0):
        gx, gy, gz = np.meshgrid(xw, iy_ext, iz_wall, indexing="ij")
        parts.append(np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()]))
    ix_core = (np.arange(nx) + 0.5) * d0
    for yw in (-W / 2.0 - half * d0, W / 2.0 + half * d0):
        gx, gy, gz = np.meshgrid(ix_core, yw, iz_wall, indexing="ij")
        parts.append(np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()]))

    pos = np.vstack(parts)
    n = pos.shape[0]
    return MarkerSet(np.full(n, body_id, dtype=np.int32), pos.copy(), pos,
                     np.zeros_like(pos))
