"""Numba inner loops of the SPH solver.

All kernels are pure maps over per-point state: each prange iteration writes
only its own output slot, so results are bit-deterministic for any thread
count.  Cross-body force reductions are staged per particle and summed with
numpy afterwards.

Neighbor lists are capacity-padded CSR built in a single sweep: row i starts
at ``indptr[i]`` and holds ``nlen[i]`` valid entries.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _dwdq(q, sig):
    # cubic spline derivative dW/dq, support q in [0, 2)
    if q >= 2.0:
        return 0.0
    if q < 1.0:
        return sig * (-3.0 * q + 2.25 * q * q)
    t = 2.0 - q
    return -0.75 * sig * t * t


@njit(cache=True, inline="always")
def _w(q, sig):
    if q >= 2.0:
        return 0.0
    if q < 1.0:
        return sig * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
    t = 2.0 - q
    return 0.25 * sig * t * t * t


@njit(parallel=True, cache=True)
def candidate_caps(cell_xyz, dims, cell_start, reach, caps):
    """Upper bound on neighbors per point: population of its cell block."""
    n = cell_xyz.shape[0]
    nx, ny, nz = dims[0], dims[1], dims[2]
    for i in prange(n):
        cx = cell_xyz[i, 0]
        cy = cell_xyz[i, 1]
        cz = cell_xyz[i, 2]
        xlo = max(0, cx - reach)
        xhi = min(nx - 1, cx + reach)
        span = xhi - xlo + 1
        c = 0
        for gz in range(max(0, cz - reach), min(nz, cz + reach + 1)):
            for gy in range(max(0, cy - reach), min(ny, cy + reach + 1)):
                cid = xlo + nx * (gy + ny * gz)
                c += cell_start[cid + span] - cell_start[cid]
        caps[i] = c


@njit(parallel=True, cache=True, fastmath=True)
def fill_neighbors(pos, pos_sorted, order, cell_xyz, dims, cell_start,
                   reach, cutoff2, indptr, indices, nlen):
    """Write the exact fixed-radius lists into the padded CSR rows."""
    n = pos.shape[0]
    nx, ny, nz = dims[0], dims[1], dims[2]
    for i in prange(n):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        cx = cell_xyz[i, 0]
        cy = cell_xyz[i, 1]
        cz = cell_xyz[i, 2]
        xlo = max(0, cx - reach)
        span = min(nx - 1, cx + reach) - xlo + 1
        w = indptr[i]
        c = 0
        for gz in range(max(0, cz - reach), min(nz, cz + reach + 1)):
            for gy in range(max(0, cy - reach), min(ny, cy + reach + 1)):
                cid = xlo + nx * (gy + ny * gz)
                for k in range(cell_start[cid], cell_start[cid + span]):
                    dx = pos_sorted[k, 0] - xi
                    dy = pos_sorted[k, 1] - yi
                    dz = pos_sorted[k, 2] - zi
                    if dx * dx + dy * dy + dz * dz <= cutoff2:
                        j = order[k]
                        if j != i:
                            indices[w + c] = j
                            c += 1
        nlen[i] = c


@njit(parallel=True, cache=True, fastmath=True)
def adami_extrapolate(pos, n_fluid, vel_f, rho_f, sig_f, m_vel_wall, indptr,
                      nlen, indices, h, gravity, m_sig, m_rho, m_ghost):
    """Extrapolate stress/density/ghost velocity onto boundary markers.

    Shepard-weighted averages over fluid neighbors; the pressure part gets a
    hydrostatic correction rho_f * g . (x_m - x_f) so wall pressure under a
    static column is consistent.  Markers without fluid neighbors carry zero
    extrapolated state.
    """
    n_markers = m_sig.shape[0]
    sig_w = 1.0 / (np.pi * h * h * h)
    inv_h = 1.0 / h
    gx, gy, gz = gravity[0], gravity[1], gravity[2]
    for im in prange(n_markers):
        i = n_fluid + im
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        sw = 0.0
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        s4 = 0.0
        s5 = 0.0
        srho = 0.0
        svx = 0.0
        svy = 0.0
        svz = 0.0
        corr = 0.0
        for k in range(indptr[i], indptr[i] + nlen[i]):
            j = indices[k]
            if j >= n_fluid:
                continue
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            r = np.sqrt(dx * dx + dy * dy + dz * dz)
            w = _w(r * inv_h, sig_w)
            if w <= 0.0:
                continue
            sw += w
            s0 += sig_f[j, 0] * w
            s1 += sig_f[j, 1] * w
            s2 += sig_f[j, 2] * w
            s3 += sig_f[j, 3] * w
            s4 += sig_f[j, 4] * w
            s5 += sig_f[j, 5] * w
            srho += rho_f[j] * w
            svx += vel_f[j, 0] * w
            svy += vel_f[j, 1] * w
            svz += vel_f[j, 2] * w
            corr += rho_f[j] * (gx * dx + gy * dy + gz * dz) * w
        if sw > 1.0e-12:
            inv = 1.0 / sw
            dp = corr * inv
            m_sig[im, 0] = s0 * inv - dp
            m_sig[im, 1] = s1 * inv - dp
            m_sig[im, 2] = s2 * inv - dp
            m_sig[im, 3] = s3 * inv
            m_sig[im, 4] = s4 * inv
            m_sig[im, 5] = s5 * inv
            m_rho[im] = srho * inv
            m_ghost[im, 0] = 2.0 * m_vel_wall[im, 0] - svx * inv
            m_ghost[im, 1] = 2.0 * m_vel_wall[im, 1] - svy * inv
            m_ghost[im, 2] = 2.0 * m_vel_wall[im, 2] - svz * inv
        else:
            m_sig[im, 0] = 0.0
            m_sig[im, 1] = 0.0
            m_sig[im, 2] = 0.0
            m_sig[im, 3] = 0.0
            m_sig[im, 4] = 0.0
            m_sig[im, 5] = 0.0
            m_rho[im] = 0.0
            m_ghost[im, 0] = 0.0
            m_ghost[im, 1] = 0.0
            m_ghost[im, 2] = 0.0


@njit(parallel=True, cache=True, fastmath=True)
def fluid_rates(table, n_fluid, rho_f, indptr, nlen, indices, h, support2,
                mass, gravity, alpha_visc, c_sound, body_slot, body_com,
                drho, acc, gradu, bload):
    """Density rate, velocity gradient, acceleration and staged body loads.

    One pass over the neighbor lists of every fluid particle.  ``table`` is
    the packed per-point gather layout (one row per point, markers after
    fluid): columns 0:3 position, 3:6 continuity velocity (prescribed wall
    velocity for markers), 6:9 shear velocity (no-slip ghost velocity for
    markers), 9 reciprocal density, 10:16 sigma/rho^2 in Voigt order.
    ``bload`` rows must be zeroed by the caller.
    """
    sig_w = 1.0 / (np.pi * h * h * h)
    inv_h = 1.0 / h
    eps_h2 = 0.01 * h * h
    gx, gy, gz = gravity[0], gravity[1], gravity[2]
    for i in prange(n_fluid):
        xi = table[i, 0]
        yi = table[i, 1]
        zi = table[i, 2]
        uix = table[i, 3]
        uiy = table[i, 4]
        uiz = table[i, 5]
        rho_i = rho_f[i]
        si0 = table[i, 10]
        si1 = table[i, 11]
        si2 = table[i, 12]
        si3 = table[i, 13]
        si4 = table[i, 14]
        si5 = table[i, 15]
        div = 0.0
        ax = 0.0
        ay = 0.0
        az = 0.0
        g00 = 0.0
        g01 = 0.0
        g02 = 0.0
        g10 = 0.0
        g11 = 0.0
        g12 = 0.0
        g20 = 0.0
        g21 = 0.0
        g22 = 0.0
        for k in range(indptr[i], indptr[i] + nlen[i]):
            j = indices[k]
            rx = xi - table[j, 0]
            ry = yi - table[j, 1]
            rz = zi - table[j, 2]
            r2 = rx * rx + ry * ry + rz * rz
            if r2 > support2 or r2 == 0.0:
                continue
            r = np.sqrt(r2)
            cg = _dwdq(r * inv_h, sig_w) / (h * r)
            gwx = cg * rx
            gwy = cg * ry
            gwz = cg * rz
            w_j = table[j, 9]
            # continuity with prescribed wall velocity
            div += ((table[j, 3] - uix) * gwx + (table[j, 4] - uiy) * gwy +
                    (table[j, 5] - uiz) * gwz) * w_j
            # velocity gradient with ghost (no-slip) velocity
            sjx = table[j, 6]
            sjy = table[j, 7]
            sjz = table[j, 8]
            dsx = (sjx - uix) * w_j
            dsy = (sjy - uiy) * w_j
            dsz = (sjz - uiz) * w_j
            g00 += dsx * gwx
            g01 += dsx * gwy
            g02 += dsx * gwz
            g10 += dsy * gwx
            g11 += dsy * gwy
            g12 += dsy * gwz
            g20 += dsz * gwx
            g21 += dsz * gwy
            g22 += dsz * gwz
            # momentum: pairwise-antisymmetric stress divergence
            t0 = si0 + table[j, 10]
            t1 = si1 + table[j, 11]
            t2 = si2 + table[j, 12]
            t3 = si3 + table[j, 13]
            t4 = si4 + table[j, 14]
            t5 = si5 + table[j, 15]
            pax = mass * (t0 * gwx + t3 * gwy + t4 * gwz)
            pay = mass * (t3 * gwx + t1 * gwy + t5 * gwz)
            paz = mass * (t4 * gwx + t5 * gwy + t2 * gwz)
            # Monaghan artificial viscosity on approach
            if alpha_visc > 0.0:
                udx = (uix - sjx) * rx + (uiy - sjy) * ry + (uiz - sjz) * rz
                if udx < 0.0:
                    mu_ij = h * udx / (r2 + eps_h2)
                    pi_ij = -alpha_visc * c_sound * mu_ij / (0.5 *
                                                             (rho_i +
                                                              1.0 / w_j))
                    pax -= mass * pi_ij * gwx
                    pay -= mass * pi_ij * gwy
                    paz -= mass * pi_ij * gwz
            ax += pax
            ay += pay
            az += paz
            if j >= n_fluid:
                b = body_slot[j - n_fluid]
                fx = -mass * pax
                fy = -mass * pay
                fz = -mass * paz
                bload[i, b, 0] += fx
                bload[i, b, 1] += fy
                bload[i, b, 2] += fz
                lx = table[j, 0] - body_com[b, 0]
                ly = table[j, 1] - body_com[b, 1]
                lz = table[j, 2] - body_com[b, 2]
                bload[i, b, 3] += ly * fz - lz * fy
                bload[i, b, 4] += lz * fx - lx * fz
                bload[i, b, 5] += lx * fy - ly * fx
        drho[i] = -rho_i * mass * div
        acc[i, 0] = ax + gx
        acc[i, 1] = ay + gy
        acc[i, 2] = az + gz
        gradu[i, 0] = g00 * mass
        gradu[i, 1] = g01 * mass
        gradu[i, 2] = g02 * mass
        gradu[i, 3] = g10 * mass
        gradu[i, 4] = g11 * mass
        gradu[i, 5] = g12 * mass
        gradu[i, 6] = g20 * mass
        gradu[i, 7] = g21 * mass
        gradu[i, 8] = g22 * mass


@njit(parallel=True, cache=True)
def advance_stress(sig_base, sig_eval, gradu, dt, K, G, mu_s, mu_2, I0,
                   grain_d, rho0, cohesion, out):
    """Hypoelastic trial update with Jaumann rotation, then plastic return.

    Trial:   sig = sig_base + dt * (K tr(e) I + 2G dev(e) + W.sig - sig.W)
    Return:  if tau_bar exceeds mu(I) p + cohesion the deviator is scaled
             radially onto the yield surface; tension is cut to zero stress
             for cohesionless material.
    """
    n = sig_base.shape[0]
    third = 1.0 / 3.0
    for i in prange(n):
        a00 = gradu[i, 0]
        a01 = gradu[i, 1]
        a02 = gradu[i, 2]
        a10 = gradu[i, 3]
        a11 = gradu[i, 4]
        a12 = gradu[i, 5]
        a20 = gradu[i, 6]
        a21 = gradu[i, 7]
        a22 = gradu[i, 8]
        e00 = a00
        e11 = a11
        e22 = a22
        e01 = 0.5 * (a01 + a10)
        e02 = 0.5 * (a02 + a20)
        e12 = 0.5 * (a12 + a21)
        w01 = 0.5 * (a01 - a10)
        w02 = 0.5 * (a02 - a20)
        w12 = 0.5 * (a12 - a21)
        s0 = sig_eval[i, 0]
        s1 = sig_eval[i, 1]
        s2 = sig_eval[i, 2]
        s3 = sig_eval[i, 3]
        s4 = sig_eval[i, 4]
        s5 = sig_eval[i, 5]
        # M = W . sigma, rotation term R = M + M^T
        m00 = w01 * s3 + w02 * s4
        m01 = w01 * s1 + w02 * s5
        m02 = w01 * s5 + w02 * s2
        m10 = -w01 * s0 + w12 * s4
        m11 = -w01 * s3 + w12 * s5
        m12 = -w01 * s4 + w12 * s2
        m20 = -w02 * s0 - w12 * s3
        m21 = -w02 * s3 - w12 * s1
        m22 = -w02 * s4 - w12 * s5
        tre = e00 + e11 + e22
        km = K * tre
        ed0 = e00 - tre * third
        ed1 = e11 - tre * third
        ed2 = e22 - tre * third
        t0 = sig_base[i, 0] + dt * (km + 2.0 * G * ed0 + 2.0 * m00)
        t1 = sig_base[i, 1] + dt * (km + 2.0 * G * ed1 + 2.0 * m11)
        t2 = sig_base[i, 2] + dt * (km + 2.0 * G * ed2 + 2.0 * m22)
        t3 = sig_base[i, 3] + dt * (2.0 * G * e01 + (m01 + m10))
        t4 = sig_base[i, 4] + dt * (2.0 * G * e02 + (m02 + m20))
        t5 = sig_base[i, 5] + dt * (2.0 * G * e12 + (m12 + m21))
        p = -(t0 + t1 + t2) * third
        if p <= 0.0:
            if cohesion <= 0.0 or p < -cohesion / mu_s:
                out[i, 0] = 0.0
                out[i, 1] = 0.0
                out[i, 2] = 0.0
                out[i, 3] = 0.0
                out[i, 4] = 0.0
                out[i, 5] = 0.0
                continue
            tau_y = mu_s * p + cohesion
        else:
            gd = np.sqrt(2.0 * (ed0 * ed0 + ed1 * ed1 + ed2 * ed2 + 2.0 *
                                (e01 * e01 + e02 * e02 + e12 * e12)))
            if gd > 0.0 and mu_2 > mu_s:
                inum = gd * grain_d / np.sqrt(p / rho0)
                mu = mu_s + (mu_2 - mu_s) / (I0 / inum + 1.0)
            else:
                mu = mu_s
            tau_y = mu * p + cohesion
        pm = (t0 + t1 + t2) * third
        d0 = t0 - pm
        d1 = t1 - pm
        d2 = t2 - pm
        tau_bar = np.sqrt(0.5 * (d0 * d0 + d1 * d1 + d2 * d2) + t3 * t3 +
                          t4 * t4 + t5 * t5)
        if tau_bar > tau_y:
            sc = tau_y / tau_bar
            out[i, 0] = pm + sc * d0
            out[i, 1] = pm + sc * d1
            out[i, 2] = pm + sc * d2
            out[i, 3] = sc * t3
            out[i, 4] = sc * t4
            out[i, 5] = sc * t5
        else:
            out[i, 0] = t0
            out[i, 1] = t1
            out[i, 2] = t2
            out[i, 3] = t3
            out[i, 4] = t4
            out[i, 5] = t5
