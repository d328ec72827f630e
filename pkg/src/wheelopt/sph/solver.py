"""SPH stepping, boundary extrapolation and rigid-body load accumulation.

The solver owns the soil ``ParticleSet`` plus one concatenated ``MarkerSet``
for all rigid bodies (container first, then any added bodies such as
wheels).  Every per-particle loop is a pure map over previous-step state,
executed by the numba kernels in ``_kernels``; one solver instance is owned
by one campaign worker and instances share no mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import CflError, ConfigError, NumericalBlowupError
from . import _kernels, tensors
from .neighbors import (NeighborLists, build_neighbor_lists, morton_order,
                        neighbor_search)
from .params import KernelSpec, MaterialParams, SolverConfig, TerrainPatch
from .particles import (MarkerSet, ParticleSet, build_terrain,
                        container_markers)

__all__ = [
    "SphSolver", "Rates", "compute_rates", "compute_density_rate",
    "compute_momentum_rate", "compute_velocity_gradient", "update_stress",
    "adami_boundary_update", "accumulate_body_loads", "compute_workset",
]


@dataclass
class Rates:
    drho: np.ndarray
    acc: np.ndarray
    grad_u: np.ndarray            # (n, 9) row-major du_a/dx_b
    body_forces: np.ndarray       # (B, 3)
    body_torques: np.ndarray      # (B, 3)


def _marker_arrays(markers):
    if markers is None or len(markers) == 0:
        z3 = np.zeros((0, 3), dtype=np.float64)
        return (z3, z3.copy(), z3.copy(), np.zeros((0, 6)), np.zeros(0),
                np.zeros(0, dtype=np.int32))
    return (markers.pos, markers.vel, markers.ghost_vel, markers.sigma_ext,
            markers.rho_ext, markers.body_id)


def adami_boundary_update(markers: MarkerSet, particles: ParticleSet,
                          nbrs: NeighborLists = None,
                          gravity=(0.0, 0.0, -9.81)) -> MarkerSet:
    """Refresh marker sigma_ext / rho_ext / ghost_vel from nearby soil."""
    if markers is None or len(markers) == 0:
        return markers
    if nbrs is None:
        nbrs = neighbor_search(particles.pos, markers.pos,
                               particles.kernel.support)
    _kernels.adami_extrapolate(
        np.vstack([particles.pos, markers.pos]), len(particles),
        particles.vel, particles.rho, particles.sigma, markers.vel,
        nbrs.indptr, nbrs.nlen, nbrs.indices, particles.kernel.h,
        np.asarray(gravity, dtype=np.float64), markers.sigma_ext,
        markers.rho_ext, markers.ghost_vel)
    return markers


def _pack_table(table, nf, pos_f, vel_f, rho_f, sig_f, m_pos, m_vel, m_ghost,
                m_sig, m_rho, rho0):
    """Fill the interleaved gather table consumed by the rates kernel."""
    nm = table.shape[0] - nf
    table[:nf, 0:3] = pos_f
    table[:nf, 3:6] = vel_f
    table[:nf, 6:9] = vel_f
    np.divide(1.0, rho_f, out=table[:nf, 9])
    np.multiply(sig_f, (table[:nf, 9]**2)[:, None], out=table[:nf, 10:16])
    if nm:
        table[nf:, 0:3] = m_pos
        table[nf:, 3:6] = m_vel
        table[nf:, 6:9] = m_ghost
        np.divide(1.0, np.where(m_rho > 0, m_rho, rho0), out=table[nf:, 9])
        np.multiply(m_sig, (table[nf:, 9]**2)[:, None],
                    out=table[nf:, 10:16])


def compute_rates(particles: ParticleSet, markers: MarkerSet = None,
                  nbrs: NeighborLists = None, gravity=(0.0, 0.0, -9.81),
                  alpha_visc: float = 0.0, body_com=None,
                  update_markers: bool = True) -> Rates:
    """Density rate, acceleration, velocity gradient and body loads."""
    nf = len(particles)
    m_pos, m_vel, m_ghost, m_sig, m_rho, body_id = _marker_arrays(markers)
    nm = m_pos.shape[0]
    pos_all = np.vstack([particles.pos, m_pos]) if nm else particles.pos
    if nbrs is None:
        nbrs = build_neighbor_lists(pos_all, particles.kernel.support)
    if nm and update_markers:
        adami_boundary_update(markers, particles, nbrs, gravity)
        m_ghost, m_sig, m_rho = (markers.ghost_vel, markers.sigma_ext,
                                 markers.rho_ext)

    n_bodies = int(body_id.max()) + 1 if nm else 0
    if body_com is None:
        body_com = np.zeros((n_bodies, 3), dtype=np.float64)
    else:
        body_com = np.asarray(body_com, dtype=np.float64)
        n_bodies = body_com.shape[0]
    if nm and int(body_id.max()) >= n_bodies:
        raise ConfigError("marker body_id exceeds registered bodies")

    table = np.empty((nf + nm, 16), dtype=np.float64)
    _pack_table(table, nf, particles.pos, particles.vel, particles.rho,
                particles.sigma, m_pos, m_vel, m_ghost, m_sig, m_rho,
                particles.material.rho0)
    drho = np.empty(nf, dtype=np.float64)
    acc = np.empty((nf, 3), dtype=np.float64)
    gradu = np.empty((nf, 9), dtype=np.float64)
    bload = np.zeros((nf, max(n_bodies, 1), 6), dtype=np.float64)
    _kernels.fluid_rates(
        table, nf, particles.rho, nbrs.indptr, nbrs.nlen, nbrs.indices,
        particles.kernel.h, particles.kernel.support**2, particles.mass,
        np.asarray(gravity, dtype=np.float64), alpha_visc,
        particles.material.sound_speed,
        body_id if nm else np.zeros(0, dtype=np.int32),
        body_com if n_bodies else np.zeros((1, 3)), drho, acc, gradu, bload)
    loads = bload.sum(axis=0)
    return Rates(drho, acc, gradu, loads[:n_bodies, :3].copy(),
                 loads[:n_bodies, 3:].copy())


def compute_density_rate(particles, nbrs=None, markers=None) -> np.ndarray:
    """Continuity-equation rate: -rho_i sum_j (m/rho_j)(u_j - u_i).gradW."""
    rates = compute_rates(particles, markers, nbrs, gravity=(0, 0, 0))
    if not np.all(np.isfinite(rates.drho)):
        bad = int(np.flatnonzero(~np.isfinite(rates.drho))[0])
        raise NumericalBlowupError(f"non-finite density rate at particle {bad}")
    return rates.drho


def compute_momentum_rate(particles, nbrs=None, gravity=(0, 0, -9.81),
                          markers=None, alpha_visc=0.0) -> np.ndarray:
    """Stress-divergence acceleration plus body force."""
    rates = compute_rates(particles, markers, nbrs, gravity, alpha_visc)
    if not np.all(np.isfinite(rates.acc)):
        bad = int(np.flatnonzero(~np.isfinite(rates.acc).all(axis=1))[0])
        raise NumericalBlowupError(f"non-finite acceleration at particle {bad}")
    return rates.acc


def compute_velocity_gradient(particles, nbrs=None, markers=None):
    rates = compute_rates(particles, markers, nbrs, gravity=(0, 0, 0))
    return rates.grad_u.reshape(-1, 3, 3)


def accumulate_body_loads(markers, particles, nbrs=None, body_com=None,
                          gravity=(0, 0, -9.81), alpha_visc=0.0):
    """Net soil force and torque per rigid body (about each body COM)."""
    rates = compute_rates(particles, markers, nbrs, gravity, alpha_visc,
                          body_com)
    return rates.body_forces, rates.body_torques


def update_stress(sigma_voigt, grad_u, dt, material: MaterialParams,
                  sigma_eval=None):
    """Advance stress: hypoelastic trial + Jaumann rotation + plastic return.

    ``sigma_eval`` is the state whose rotation/yield is evaluated (equal to
    ``sigma_voigt`` for a plain step; the midpoint state in stage two of the
    RK2 scheme).  Returns the new Voigt stress.
    """
    sigma_voigt = np.atleast_2d(np.asarray(sigma_voigt, dtype=np.float64))
    if sigma_eval is None:
        sigma_eval = sigma_voigt
    else:
        sigma_eval = np.atleast_2d(np.asarray(sigma_eval, dtype=np.float64))
    grad_u = np.asarray(grad_u, dtype=np.float64).reshape(-1, 9)
    out = np.empty_like(sigma_voigt)
    _kernels.advance_stress(sigma_voigt, sigma_eval, grad_u, dt, material.K,
                            material.G, material.mu_s, material.mu_2,
                            material.I0, material.grain_d, material.rho0,
                            material.cohesion, out)
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out).all(axis=1))[0])
        raise NumericalBlowupError(f"non-finite stress at particle {bad}")
    return out


def compute_workset(particles, markers=None, nbrs=None, dt=1e-4,
                    gravity=(0, 0, 0)):
    """Per-particle kinematic/constitutive diagnostics (test support).

    Returns a dict with grad_u, eps_dot, phi_dot, pressure, tau, tau_bar and
    the plastic shear strain rate implied by the radial return over ``dt``.
    """
    grad_u = compute_velocity_gradient(particles, nbrs, markers)
    eps_dot = 0.5 * (grad_u + np.swapaxes(grad_u, 1, 2))
    phi_dot = 0.5 * (grad_u - np.swapaxes(grad_u, 1, 2))
    tau = tensors.deviator(particles.sigma)
    tbar = tensors.tau_bar(particles.sigma)
    p = tensors.pressure(particles.sigma)

    mat = particles.material
    elastic = _trial_stress(particles.sigma, grad_u.reshape(-1, 9), dt, mat)
    trial_tb = tensors.tau_bar(elastic)
    trial_p = tensors.pressure(elastic)
    tau_y = np.maximum(mat.mu_s * trial_p + mat.cohesion, 0.0)
    lam = np.sqrt(2.0) * np.maximum(trial_tb - tau_y, 0.0) / (2.0 * mat.G * dt)
    lam[trial_p <= 0] = 0.0
    return {
        "grad_u": grad_u, "eps_dot": eps_dot, "phi_dot": phi_dot,
        "tau": tau, "tau_bar": tbar, "pressure": p, "lambda_dot": lam,
    }


def _trial_stress(sigma, gradu9, dt, mat):
    """Elastic + rotation trial update without the plastic return (numpy)."""
    sig = tensors.voigt_to_full(sigma)
    g = gradu9.reshape(-1, 3, 3)
    eps = 0.5 * (g + np.swapaxes(g, 1, 2))
    w = 0.5 * (g - np.swapaxes(g, 1, 2))
    tre = np.trace(eps, axis1=1, axis2=2)
    dev = eps - tre[:, None, None] * np.eye(3) / 3.0
    rot = np.matmul(w, sig) - np.matmul(sig, w)
    new = sig + dt * (mat.K * tre[:, None, None] * np.eye(3) +
                      2.0 * mat.G * dev + rot)
    return tensors.full_to_voigt(new)


class SphSolver:
    """Granular terrain solver with rigid-body coupling.

    Parameters
    ----------
    patch : TerrainPatch
        Soil geometry and material.
    config : SolverConfig
        Numerical settings; ``config.dt`` of ``None`` selects the CFL step.
    with_container : bool
        Build static floor/wall markers around the patch (body 0, "ground").
    """

    def __init__(self, patch: TerrainPatch, config: SolverConfig = None,
                 with_container: bool = True):
        self.patch = patch
        self.config = config or SolverConfig()
        if self.config.threads > 0:
            import numba
            numba.set_num_threads(self.config.threads)
        self.particles = build_terrain(patch, self.config.particle_cap)
        self.kernel: KernelSpec = self.particles.kernel
        self.material: MaterialParams = patch.material
        self.gravity = patch.gravity_vec
        self.time = 0.0

        self.body_names = []
        self._body_slices = []
        self._marker_sets = []
        if with_container:
            cont = container_markers(patch, self.config.wall_layers,
                                     self.config.wall_freeboard, body_id=0)
            order = morton_order(cont.pos, self.kernel.support,
                                 cont.pos.min(axis=0), cont.pos.max(axis=0))
            cont = MarkerSet(cont.body_id, cont.offsets[order],
                             cont.pos[order], cont.vel[order])
            self._register_body("ground", cont)
        self._sync_markers()
        self._loads = (np.zeros((len(self.body_names), 3)),
                       np.zeros((len(self.body_names), 3)))
        self._nbrs = None
        self._rebuild_ref = None
        self._disp_bound = 0.0
        margin = 4.0 * self.kernel.support
        self._grid_lo = np.array([
            -margin, -patch.width / 2 - margin, -patch.depth - margin])
        self._grid_hi = np.array([
            patch.length + margin, patch.width / 2 + margin, 1.0])

    # ------------------------------------------------------------- bodies

    def _register_body(self, name, markers: MarkerSet):
        start = sum(len(m) for m in self._marker_sets)
        self.body_names.append(name)
        self._body_slices.append(slice(start, start + len(markers)))
        self._marker_sets.append(markers)

    def add_body(self, name, offsets, com=(0.0, 0.0, 0.0)) -> int:
        """Register a rigid body from body-frame marker offsets."""
        offsets = np.atleast_2d(np.asarray(offsets, dtype=np.float64))
        body_id = len(self.body_names)
        com = np.asarray(com, dtype=np.float64)
        mk = MarkerSet(np.full(len(offsets), body_id, dtype=np.int32),
                       offsets, offsets + com, np.zeros_like(offsets))
        self._register_body(name, mk)
        self._sync_markers()
        self._loads = (np.zeros((len(self.body_names), 3)),
                       np.zeros((len(self.body_names), 3)))
        self._nbrs = None
        return body_id

    def _sync_markers(self):
        self.markers = MarkerSet.concat(self._marker_sets) \
            if self._marker_sets else MarkerSet.empty()
        self.body_com = np.zeros((len(self.body_names), 3), dtype=np.float64)

    def set_body_state(self, body_id, pos, rot, vel, omega):
        """Prescribe a body's pose/velocity; recomputes its marker kinematics.

        ``rot`` is the 3x3 world-from-body rotation.
        """
        if body_id < 0 or body_id >= len(self.body_names):
            raise ConfigError(f"unknown body_id {body_id}")
        sel = self._body_slices[body_id]
        pos = np.asarray(pos, dtype=np.float64)
        world_off = self.markers.offsets[sel] @ np.asarray(rot).T
        self.markers.pos[sel] = pos + world_off
        self.markers.vel[sel] = np.asarray(vel) + np.cross(
            np.asarray(omega, dtype=np.float64), world_off)
        self.body_com[body_id] = pos

    def body_loads(self):
        """Soil force/torque per body from the most recent step."""
        return self._loads

    # ------------------------------------------------------------ stepping

    def max_speed(self) -> float:
        s = 0.0
        if len(self.particles):
            s = float(np.sqrt((self.particles.vel**2).sum(axis=1)).max())
        if len(self.markers):
            s = max(s, float(np.sqrt((self.markers.vel**2).sum(axis=1)).max()))
        return s

    def required_dt(self) -> float:
        """CFL limit: safety * h / (c + max speed)."""
        c = self.material.sound_speed
        return self.config.cfl_safety * self.kernel.h / (c + self.max_speed())

    def _check_finite(self):
        for name, arr in (("position", self.particles.pos),
                          ("velocity", self.particles.vel),
                          ("density", self.particles.rho)):
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(
                    ~np.isfinite(arr.reshape(len(self.particles), -1)).all(
                        axis=1))[0])
                raise NumericalBlowupError(
                    f"non-finite {name} at particle {bad}")

    def _alloc_buffers(self):
        nf, nm = len(self.particles), len(self.markers)
        n = nf + nm
        nb = max(len(self.body_names), 1)
        self._pos_all = np.empty((n, 3), dtype=np.float64)
        self._table = np.empty((n, 16), dtype=np.float64)
        self._drho = np.empty(nf, dtype=np.float64)
        self._acc = np.empty((nf, 3), dtype=np.float64)
        self._gradu = np.empty((nf, 9), dtype=np.float64)
        self._bload = np.zeros((nf, nb, 6), dtype=np.float64)

    def _spatial_sort(self):
        """Reorder fluid particles along a Morton curve for cache locality."""
        order = morton_order(self.particles.pos,
                             self.kernel.support * (1.0 + self.config.skin),
                             self._grid_lo, self._grid_hi)
        p = self.particles
        p.pos = np.ascontiguousarray(p.pos[order])
        p.vel = np.ascontiguousarray(p.vel[order])
        p.rho = np.ascontiguousarray(p.rho[order])
        p.sigma = np.ascontiguousarray(p.sigma[order])

    def _rebuild_neighbors(self):
        self._spatial_sort()
        nf = len(self.particles)
        pos_all = self._pos_all
        np.copyto(pos_all[:nf], self.particles.pos)
        if len(self.markers):
            np.copyto(pos_all[nf:], self.markers.pos)
        cutoff = self.kernel.support * (1.0 + self.config.skin)
        self._nbrs = build_neighbor_lists(pos_all, cutoff, self._grid_lo,
                                          self._grid_hi)
        self._rebuild_ref = pos_all.copy()
        self._disp_bound = 0.0

    def _ensure_neighbors(self, vmax, dt):
        """Rebuild lists only when motion may have eaten the skin margin.

        Pairs inside the skin but beyond the kernel support contribute exact
        zeros, so deferring the rebuild does not change any sums as long as
        no true pair is missed; the displacement guard enforces that.
        """
        nf, nm = len(self.particles), len(self.markers)
        if self._nbrs is None or getattr(self, "_pos_all", None) is None or \
                self._pos_all.shape[0] != nf + nm:
            self._alloc_buffers()
            self._rebuild_neighbors()
            return
        margin = 0.45 * self.config.skin * self.kernel.support
        upcoming = 2.0 * vmax * dt
        if self._disp_bound + upcoming <= margin:
            return
        pos_now = np.vstack([self.particles.pos, self.markers.pos]) \
            if nm else self.particles.pos
        exact = float(np.sqrt(
            ((pos_now - self._rebuild_ref)**2).sum(axis=1)).max())
        if exact + upcoming > margin:
            self._rebuild_neighbors()
        else:
            self._disp_bound = exact

    def _eval_rates(self, pos_f, vel_f, rho_f, sig_f, m_pos) -> Rates:
        """Stage-rate evaluation through preallocated buffers.

        The returned arrays are views of shared buffers: consume them before
        the next _eval_rates call.
        """
        nf = len(self.particles)
        mk = self.markers
        nm = len(mk)
        np.copyto(self._pos_all[:nf], pos_f)
        if nm:
            np.copyto(self._pos_all[nf:], m_pos)
            _kernels.adami_extrapolate(self._pos_all, nf, vel_f, rho_f, sig_f,
                                       mk.vel, self._nbrs.indptr,
                                       self._nbrs.nlen, self._nbrs.indices,
                                       self.kernel.h, self.gravity,
                                       mk.sigma_ext, mk.rho_ext, mk.ghost_vel)
        _pack_table(self._table, nf, pos_f, vel_f, rho_f, sig_f, m_pos,
                    mk.vel, mk.ghost_vel, mk.sigma_ext, mk.rho_ext,
                    self.material.rho0)
        self._bload.fill(0.0)
        _kernels.fluid_rates(
            self._table, nf, rho_f, self._nbrs.indptr, self._nbrs.nlen,
            self._nbrs.indices, self.kernel.h, self.kernel.support**2,
            self.particles.mass, self.gravity, self.config.alpha_visc,
            self.material.sound_speed, mk.body_id,
            self.body_com if len(self.body_names) else np.zeros((1, 3)),
            self._drho, self._acc, self._gradu, self._bload)
        loads = self._bload.sum(axis=0)
        nbod = len(self.body_names)
        return Rates(self._drho, self._acc, self._gradu,
                     loads[:nbod, :3].copy(), loads[:nbod, 3:].copy())

    def step(self, dt: float):
        """Advance the coupled particle/marker state one RK2 step."""
        self._check_finite()
        c = self.material.sound_speed
        vmax = self.max_speed()
        dt_req = self.config.cfl_safety * self.kernel.h / (c + vmax)
        if dt > dt_req * (1.0 + 1e-9):
            raise CflError(dt, dt_req)
        p = self.particles
        mk = self.markers
        self._ensure_neighbors(vmax, dt)

        r1 = self._eval_rates(p.pos, p.vel, p.rho, p.sigma, mk.pos)
        sig_h = update_stress(p.sigma, r1.grad_u, 0.5 * dt, self.material)
        pos_h = p.pos + (0.5 * dt) * p.vel
        vel_h = p.vel + (0.5 * dt) * r1.acc
        rho_h = p.rho + (0.5 * dt) * r1.drho
        m_pos_h = mk.pos + (0.5 * dt) * mk.vel if len(mk) else mk.pos

        # r1 views are dead past this point: stage 2 reuses the same buffers
        r2 = self._eval_rates(pos_h, vel_h, rho_h, sig_h, m_pos_h)
        p.sigma = update_stress(p.sigma, r2.grad_u, dt, self.material,
                                sigma_eval=sig_h)
        p.pos = p.pos + dt * vel_h
        p.vel = p.vel + dt * r2.acc
        p.rho = p.rho + dt * r2.drho
        if self.config.velocity_damping > 0.0:
            p.vel *= math.exp(-self.config.velocity_damping * dt)
        if len(mk):
            mk.pos += dt * mk.vel
        self._loads = (r2.body_forces, r2.body_torques)
        self._disp_bound += max(vmax, self.max_speed()) * dt
        self.time += dt

    def settle(self, duration: float, damping: float = 30.0):
        """Run damped relaxation for ``duration`` seconds of sim time."""
        saved = self.config.velocity_damping
        self.config.velocity_damping = damping
        try:
            t_end = self.time + duration
            while self.time < t_end - 1e-12:
                dt = min(0.9 * self.required_dt(), t_end - self.time)
                self.step(dt)
        finally:
            self.config.velocity_damping = saved

    # ---------------------------------------------------------- inspection

    def total_mass(self):
        return self.particles.total_mass()

    def total_volume(self):
        return self.particles.total_volume()

    def state_dict(self):
        """Deep-copyable snapshot of the mutable solver state."""
        return {
            "pos": self.particles.pos.copy(),
            "vel": self.particles.vel.copy(),
            "rho": self.particles.rho.copy(),
            "sigma": self.particles.sigma.copy(),
            "time": self.time,
        }

    def load_state_dict(self, state):
        self.particles.pos = state["pos"].copy()
        self.particles.vel = state["vel"].copy()
        self.particles.rho = state["rho"].copy()
        self.particles.sigma = state["sigma"].copy()
        self.time = float(state["time"])
        self._nbrs = None

    def snapshot_rows(self):
        """Columns: id, x, y, z, vx, vy, vz, rho, p, tau_bar."""
        p = self.particles
        return np.column_stack([
            np.arange(len(p)), p.pos, p.vel, p.rho, p.pressure(), p.tau_bar()
        ])

    def write_snapshot(self, path):
        header = "id x y z vx vy vz rho p tau_bar"
        np.savetxt(path, self.snapshot_rows(), header=header)
