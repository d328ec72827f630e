"""Cubic-spline SPH kernel, numpy reference implementation.

The numba hot loops in ``_kernels`` inline the same polynomial; the unit
tests cross-check both against each other and against the normalization
integral.
"""

from __future__ import annotations

import numpy as np


def w_cubic(r, h):
    """Kernel value W(r, h) in 3-D, compact support 2h."""
    q = np.asarray(r, dtype=np.float64) / h
    sig = 1.0 / (np.pi * h**3)
    out = np.zeros_like(q)
    near = q < 1.0
    far = (q >= 1.0) & (q < 2.0)
    out[near] = sig * (1.0 - 1.5 * q[near]**2 + 0.75 * q[near]**3)
    out[far] = sig * 0.25 * (2.0 - q[far])**3
    return out


def grad_w_cubic(rvec, h):
    """Kernel gradient with respect to the first argument of W(x_i - x_j)."""
    rvec = np.asarray(rvec, dtype=np.float64)
    r = np.linalg.norm(rvec, axis=-1)
    q = r / h
    sig = 1.0 / (np.pi * h**3)
    dwdq = np.zeros_like(q)
    near = q < 1.0
    far = (q >= 1.0) & (q < 2.0)
    dwdq[near] = sig * (-3.0 * q[near] + 2.25 * q[near]**2)
    dwdq[far] = -0.75 * sig * (2.0 - q[far])**2
    coef = np.zeros_like(q)
    nz = r > 0
    coef[nz] = dwdq[nz] / (h * r[nz])
    return rvec * coef[..., None]


def lattice_sum(h, d0, extent=3):
    """Midpoint-quadrature normalization sum of the kernel on a cubic lattice."""
    n = int(np.ceil(2.0 * h / d0)) + extent
    ax = np.arange(-n, n + 1) * d0
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    r = np.sqrt(gx**2 + gy**2 + gz**2)
    return float(np.sum(w_cubic(r, h)) * d0**3)
