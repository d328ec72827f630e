"""Midpoint (RK2) stepping, exposed generically for convergence checks.

The SPH solver advances every field with the same two-stage midpoint rule;
this standalone version lets tests measure the order of the scheme on
manufactured smooth problems, decoupled from the particle machinery.
"""

from __future__ import annotations

import numpy as np


def rk2_step(f, t, y, dt):
    """One midpoint step for dy/dt = f(t, y)."""
    y = np.asarray(y, dtype=np.float64)
    k1 = np.asarray(f(t, y))
    y_half = y + 0.5 * dt * k1
    k2 = np.asarray(f(t + 0.5 * dt, y_half))
    return y + dt * k2


def rk2_integrate(f, t0, y0, dt, n_steps):
    """Integrate n_steps of the midpoint rule, returning the final state."""
    t = float(t0)
    y = np.asarray(y0, dtype=np.float64)
    for _ in range(n_steps):
        y = rk2_step(f, t, y, dt)
        t += dt
    return y
