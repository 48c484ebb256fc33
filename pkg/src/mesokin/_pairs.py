"""Compiled O(N^2) pair reduction over the upper triangle i < j.

Every pair term used here is symmetric under swapping i and j, so the sum
over ordered pairs is twice the triangle plus the diagonal.  Rows are
reduced independently (signed terms with Neumaier compensation) and the
row partials are combined by the caller in index order, so the result does
not depend on the thread count.
"""
import math

import numba as nb
import numpy as np

DOT, REL_ENERGY, UNCERTAINTY, LOC_ANG, AL_DERIV, IMORAWETZ, SQ_DIST, POTENTIAL = range(8)
NBASE = 8


@nb.njit(inline="always")
def _row(i, x, xi, w, R, tan2c, v, eps, out):
    N = x.shape[0]
    nc = tan2c.shape[0]
    sd = 0.0
    cd = 0.0
    sal = 0.0
    cal = 0.0
    se = 0.0
    su = 0.0
    sald = 0.0
    sim = 0.0
    sdx = 0.0
    spot = 0.0
    gam = np.zeros(nc)
    x0 = x[i, 0]
    x1 = x[i, 1]
    x2 = x[i, 2]
    v0 = xi[i, 0]
    v1 = xi[i, 1]
    v2 = xi[i, 2]
    wi = w[i]
    for j in range(i + 1, N):
        ww = wi * w[j]
        a0 = x0 - x[j, 0]
        a1 = x1 - x[j, 1]
        a2 = x2 - x[j, 2]
        b0 = v0 - xi[j, 0]
        b1 = v1 - xi[j, 1]
        b2 = v2 - xi[j, 2]
        dx2 = a0 * a0 + a1 * a1 + a2 * a2
        dv2 = b0 * b0 + b1 * b1 + b2 * b2
        dot = a0 * b0 + a1 * b1 + a2 * b2
        c0 = a1 * b2 - a2 * b1
        c1 = a2 * b0 - a0 * b2
        c2 = a0 * b1 - a1 * b0
        cr2 = c0 * c0 + c1 * c1 + c2 * c2
        r = math.sqrt(dx2)
        g = math.sqrt(dv2)
        y = ww * dot - cd
        t = sd + y
        cd = (t - sd) - y
        sd = t
        se += ww * dv2
        su += ww * (r * g)
        sdx += ww * dx2
        far = r >= eps
        if far:
            y = ww * dot / r - cal
            t = sal + y
            cal = (t - sal) - y
            sal = t
            sald += ww * cr2 / (dx2 * r)
            spot += ww / r
        if r <= R:
            sim += ww * dv2
        for q in range(nc):
            if g < v[q]:
                gam[q] += ww
            elif far and cr2 < tan2c[q] * dot * dot:
                gam[q] += ww
    out[i, DOT] = sd
    out[i, REL_ENERGY] = se
    out[i, UNCERTAINTY] = su
    out[i, LOC_ANG] = sal
    out[i, AL_DERIV] = sald
    out[i, IMORAWETZ] = sim
    out[i, SQ_DIST] = sdx
    out[i, POTENTIAL] = spot
    for q in range(nc):
        out[i, NBASE + q] = gam[q]


@nb.njit(parallel=True, cache=True)
def pair_rows(x, xi, w, R, tan2c, v, eps):
    """Per-row partial sums over j > i; positions/velocities padded to 3 columns."""
    N = x.shape[0]
    out = np.zeros((N, NBASE + tan2c.shape[0]))
    half = (N + 1) // 2
    # rows p and N-1-p together balance the triangle across threads
    for p in nb.prange(half):
        _row(p, x, xi, w, R, tan2c, v, eps, out)
        q = N - 1 - p
        if q != p:
            _row(q, x, xi, w, R, tan2c, v, eps, out)
    return out
