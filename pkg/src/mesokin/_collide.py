"""Compiled per-cell collision kernels.

Cells are processed independently; each draws from its own Philox counter
block ``(draw, step, hash(cell))`` so results do not depend on how cells are
scheduled across threads.
"""
import math

import numba as nb
import numpy as np

from .rng import cell_counter_words, uniform_pair

# per-cell stat columns
CAND, ACC, VIOL, MAXA, MAXDIST, TRANSFER, JUMP, DV, DE, UNEQUAL, DEGEN = range(11)
NSTAT = 11

# generators fold the mass remainder into one weight, a few ulps per particle
WEIGHT_RTOL = 1e-9


@nb.njit(inline="always")
def _cell_moments(xi, w, order, s, e, n):
    M = 0.0
    E = 0.0
    V = np.zeros(3)
    for p in range(s, e):
        i = order[p]
        M += w[i]
        for k in range(n):
            V[k] += w[i] * xi[i, k]
            E += w[i] * xi[i, k] * xi[i, k]
    return M, V, E


@nb.njit(inline="always")
def _record_drift(stats, c, xi, w, order, s, e, n, M0, V0, E0):
    M1, V1, E1 = _cell_moments(xi, w, order, s, e, n)
    dv = 0.0
    for k in range(n):
        dv = max(dv, abs(V1[k] - V0[k]))
    scale = math.sqrt(M0 * E0)
    stats[c, DV] = dv / scale if scale > 0 else dv
    stats[c, DE] = abs(E1 - E0) / E0 if E0 > 0 else abs(E1 - E0)


@nb.njit(parallel=True, cache=True)
def hard_sphere_cells(x, xi, w, order, starts, cell_coords, h, sigma0, gmax, dt,
                      step, k0, k1, clamp, changed):
    """No-time-counter hard-sphere collisions; updates ``xi`` in place."""
    ncells = starts.shape[0] - 1
    n = xi.shape[1]
    vol = h ** n
    stats = np.zeros((ncells, NSTAT))
    for c in nb.prange(ncells):
        s = starts[c]
        e = starts[c + 1]
        Nc = e - s
        if Nc < 2:
            continue
        lo, hi = cell_counter_words(cell_coords[c])
        wc = w[order[s]]
        expected = 0.5 * Nc * (Nc - 1) * wc * sigma0 * gmax * dt / vol
        u0, _ = uniform_pair(0, step, lo, hi, k0, k1)
        ncand = int(math.floor(expected))
        if u0 < expected - ncand:
            ncand += 1
        if ncand == 0:
            continue
        M0, V0, E0 = _cell_moments(xi, w, order, s, e, n)
        draw = 1
        nv = np.zeros(3)
        for _ in range(ncand):
            u1, u2 = uniform_pair(draw, step, lo, hi, k0, k1)
            u3, u4 = uniform_pair(draw + 1, step, lo, hi, k0, k1)
            draw += 2
            ia = min(int(u1 * Nc), Nc - 1)
            ja = min(int(u2 * (Nc - 1)), Nc - 2)
            if ja >= ia:
                ja += 1
            i = order[s + ia]
            j = order[s + ja]
            if n == 2:
                phi = 2.0 * math.pi * u3
                nv[0] = math.cos(phi)
                nv[1] = math.sin(phi)
                uacc = u4
            else:
                u5, _u6 = uniform_pair(draw, step, lo, hi, k0, k1)
                draw += 1
                z = 2.0 * u3 - 1.0
                rho = math.sqrt(max(0.0, 1.0 - z * z))
                phi = 2.0 * math.pi * u4
                nv[0] = rho * math.cos(phi)
                nv[1] = rho * math.sin(phi)
                nv[2] = z
                uacc = u5
            stats[c, CAND] += 1
            a = 0.0
            for k in range(n):
                a += nv[k] * (xi[i, k] - xi[j, k])
            absa = abs(a)
            if absa > stats[c, MAXA]:
                stats[c, MAXA] = absa
            if absa > gmax:
                stats[c, VIOL] += 1
                if not clamp:
                    continue
            elif uacc * gmax >= absa:
                continue
            if abs(w[i] - w[j]) > WEIGHT_RTOL * max(w[i], w[j]):
                stats[c, UNEQUAL] += 1
                continue
            # reduced-mass form; both factors are exactly 1 for equal weights
            fi = 2.0 * w[j] / (w[i] + w[j])
            fj = 2.0 * w[i] / (w[i] + w[j])
            d2 = 0.0
            for k in range(n):
                xi[i, k] -= fi * a * nv[k]
                xi[j, k] += fj * a * nv[k]
                dk = x[i, k] - x[j, k]
                d2 += dk * dk
            d = math.sqrt(d2)
            changed[i] = True
            changed[j] = True
            stats[c, ACC] += 1
            stats[c, TRANSFER] += (w[i] * fi + w[j] * fj) * absa
            stats[c, JUMP] += w[i] * fi * absa * d
            if d > stats[c, MAXDIST]:
                stats[c, MAXDIST] = d
        _record_drift(stats, c, xi, w, order, s, e, n, M0, V0, E0)
    return stats


MAX_REDRAWS = 8


@nb.njit(parallel=True, cache=True)
def thermalize_cells(x, xi, w, order, starts, cell_coords, prob, step, k0, k1, changed):
    """Resample cell velocities from a Gaussian corrected to the cell's moments."""
    ncells = starts.shape[0] - 1
    n = xi.shape[1]
    stats = np.zeros((ncells, NSTAT))
    for c in nb.prange(ncells):
        s = starts[c]
        e = starts[c + 1]
        Nc = e - s
        if Nc < 3:
            continue
        stats[c, CAND] = 1
        lo, hi = cell_counter_words(cell_coords[c])
        u0, _ = uniform_pair(0, step, lo, hi, k0, k1)
        if u0 >= prob:
            continue
        M0, V0, E0 = _cell_moments(xi, w, order, s, e, n)
        mean = V0[:n] / M0
        theta = 0.0
        xc = np.zeros(n)
        for p in range(s, e):
            i = order[p]
            for k in range(n):
                dk = xi[i, k] - mean[k]
                theta += w[i] * dk * dk
                xc[k] += w[i] * x[i, k]
        xc /= M0
        z = np.empty((Nc, n))
        draw = 1
        ok = False
        for attempt in range(MAX_REDRAWS):
            m = 0
            while m < Nc * n:
                u1, u2 = uniform_pair(draw, step, lo, hi, k0, k1)
                draw += 1
                r = math.sqrt(-2.0 * math.log(1.0 - u1))
                z[m // n, m % n] = r * math.cos(2.0 * math.pi * u2)
                if m + 1 < Nc * n:
                    z[(m + 1) // n, (m + 1) % n] = r * math.sin(2.0 * math.pi * u2)
                m += 2
            zbar = np.zeros(n)
            for q in range(Nc):
                for k in range(n):
                    zbar[k] += w[order[s + q]] * z[q, k]
            zbar /= M0
            s2 = 0.0
            for q in range(Nc):
                for k in range(n):
                    z[q, k] -= zbar[k]
                    s2 += w[order[s + q]] * z[q, k] * z[q, k]
            if s2 > 0.0:
                ok = True
                break
        if not ok:
            stats[c, DEGEN] = 1
            continue
        scale = math.sqrt(theta / s2)
        for q in range(Nc):
            i = order[s + q]
            dxi2 = 0.0
            d2 = 0.0
            for k in range(n):
                new = mean[k] + scale * z[q, k]
                dk = new - xi[i, k]
                dxi2 += dk * dk
                off = x[i, k] - xc[k]
                d2 += off * off
                xi[i, k] = new
            dxi = math.sqrt(dxi2)
            changed[i] = True
            stats[c, TRANSFER] += w[i] * dxi
            stats[c, JUMP] += w[i] * dxi * math.sqrt(d2)
            stats[c, MAXDIST] = max(stats[c, MAXDIST], 2.0 * math.sqrt(d2))
        stats[c, ACC] = 1
        _record_drift(stats, c, xi, w, order, s, e, n, M0, V0, E0)
    return stats
