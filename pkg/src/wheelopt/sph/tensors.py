"""Symmetric-tensor helpers.

Stress is stored in Voigt order [xx, yy, zz, xy, xz, yz]; these helpers
convert to/from full 3x3 form and compute the invariants used by the
constitutive model.
"""

from __future__ import annotations

import numpy as np

_IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def voigt_to_full(sig):
    sig = np.atleast_2d(np.asarray(sig, dtype=np.float64))
    out = np.empty(sig.shape[:-1] + (3, 3), dtype=np.float64)
    for k, (a, b) in enumerate(_IDX):
        out[..., a, b] = sig[..., k]
        out[..., b, a] = sig[..., k]
    return out


def full_to_voigt(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty(t.shape[:-2] + (6,), dtype=np.float64)
    for k, (a, b) in enumerate(_IDX):
        out[..., k] = 0.5 * (t[..., a, b] + t[..., b, a])
    return out


def pressure(sig):
    """p = -tr(sigma)/3, positive in compression."""
    sig = np.asarray(sig, dtype=np.float64)
    return -(sig[..., 0] + sig[..., 1] + sig[..., 2]) / 3.0


def deviator(sig):
    sig = np.asarray(sig, dtype=np.float64)
    out = sig.copy()
    mean = (sig[..., 0] + sig[..., 1] + sig[..., 2]) / 3.0
    out[..., 0] -= mean
    out[..., 1] -= mean
    out[..., 2] -= mean
    return out


def tau_bar(sig):
    """Equivalent shear stress sqrt(tau : tau / 2) of the deviator."""
    d = deviator(sig)
    return np.sqrt(0.5 * (d[..., 0]**2 + d[..., 1]**2 + d[..., 2]**2) +
                   d[..., 3]**2 + d[..., 4]**2 + d[..., 5]**2)
