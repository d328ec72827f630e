"""Granular-terrain SPH solver: continuum soil with mu(I) plasticity."""

from .params import KernelSpec, MaterialParams, SolverConfig, TerrainPatch
from .particles import MarkerSet, ParticleSet, SoilParticle, build_terrain
from .neighbors import NeighborLists, neighbor_search
from .solver import (SphSolver, accumulate_body_loads, adami_boundary_update,
                     compute_density_rate, compute_momentum_rate,
                     compute_rates, compute_velocity_gradient,
                     compute_workset, update_stress)
from .integrators import rk2_integrate, rk2_step

__all__ = [
    "KernelSpec", "MaterialParams", "SolverConfig", "TerrainPatch",
    "MarkerSet", "ParticleSet", "SoilParticle", "build_terrain",
    "NeighborLists", "neighbor_search", "SphSolver", "accumulate_body_loads",
    "adami_boundary_update", "compute_density_rate", "compute_momentum_rate",
    "compute_rates", "compute_velocity_gradient", "compute_workset",
    "update_stress", "rk2_integrate", "rk2_step",
]
