"""Numba kernels for the particle and grid loops.

The Python-facing modules (``dsmc``, ``grid_oracle``, ``ensemble``) validate
inputs and own the bookkeeping; the functions here only do arithmetic on
plain arrays.  Loops are sequential with a fixed order so results are
reproducible bit for bit.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

PI = math.pi


# ---------------------------------------------------------------------------
# interpolation on the uniform lattice [-V, V]^3 with spacing h
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _bspline3(t):
    t = abs(t)
    if t < 1.0:
        return 2.0 / 3.0 - t * t + 0.5 * t * t * t
    if t < 2.0:
        s = 2.0 - t
        return s * s * s / 6.0
    return 0.0


@njit(cache=True)
def interp(c, V, h, x, y, z, order):
    """Value at ``(x, y, z)``; zero outside the box.

    ``order == 1`` is trilinear on nodal values ``c``.  ``order == 3`` is the
    cubic B-spline with coefficients ``c`` (coefficients beyond the box are
    zero), clipped at 0 to keep the integrands nonnegative.
    """
    n = c.shape[0]
    gx = (x + V) / h
    gy = (y + V) / h
    gz = (z + V) / h
    top = n - 1.0
    if gx < 0.0 or gy < 0.0 or gz < 0.0 or gx > top or gy > top or gz > top:
        return 0.0
    if order == 1:
        i = min(int(gx), n - 2)
        j = min(int(gy), n - 2)
        k = min(int(gz), n - 2)
        a = gx - i
        b = gy - j
        g = gz - k
        r = 0.0
        for di in range(2):
            wa = a if di == 1 else 1.0 - a
            for dj in range(2):
                wb = b if dj == 1 else 1.0 - b
                for dk in range(2):
                    wc = g if dk == 1 else 1.0 - g
                    r += wa * wb * wc * c[i + di, j + dj, k + dk]
        return r
    i0 = int(math.floor(gx)) - 1
    j0 = int(math.floor(gy)) - 1
    k0 = int(math.floor(gz)) - 1
    wx = np.empty(4)
    wy = np.empty(4)
    wz = np.empty(4)
    for d in range(4):
        wx[d] = _bspline3(gx - (i0 + d))
        wy[d] = _bspline3(gy - (j0 + d))
        wz[d] = _bspline3(gz - (k0 + d))
    r = 0.0
    for di in range(4):
        ii = i0 + di
        if ii < 0 or ii >= n:
            continue
        for dj in range(4):
            jj = j0 + dj
            if jj < 0 or jj >= n:
                continue
            wab = wx[di] * wy[dj]
            for dk in range(4):
                kk = k0 + dk
                if kk < 0 or kk >= n:
                    continue
                r += wab * wz[dk] * c[ii, jj, kk]
    if r < 0.0:
        return 0.0
    return r


@njit(cache=True)
def interp_many(c, V, h, pts, order):
    out = np.empty(pts.shape[0])
    for m in range(pts.shape[0]):
        out[m] = interp(c, V, h, pts[m, 0], pts[m, 1], pts[m, 2], order)
    return out


# ---------------------------------------------------------------------------
# loss frequency and gain term
# ---------------------------------------------------------------------------


@njit(cache=True)
def loss_many(fw, pts, probes):
    """``pi * sum_j fw_j |p - v_j|`` for every probe ``p``."""
    out = np.empty(probes.shape[0])
    for m in range(probes.shape[0]):
        p0 = probes[m, 0]
        p1 = probes[m, 1]
        p2 = probes[m, 2]
        s = 0.0
        for j in range(fw.shape[0]):
            d0 = p0 - pts[j, 0]
            d1 = p1 - pts[j, 1]
            d2 = p2 - pts[j, 2]
            s += fw[j] * math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        out[m] = PI * s
    return out


@njit(cache=True)
def _clamp(x, top):
    return min(max(x, -top), top)


@njit(cache=True)
def gain_sigma(coef, V, h, fw, pts, probes, nodes, wts, gamma, order):
    """Gain term at each probe from the sigma form of the pre-collision map.

    ``fw`` holds the quadrature weights of the partner velocities ``pts``.
    Returns the values (without the ``1/(4 alpha^2)`` prefactor) and a leakage
    fraction: the share of the integrand carried by quadrature points that
    leave the box, with the outside value estimated at the nearest box point.
    """
    nq = nodes.shape[0]
    out = np.zeros(probes.shape[0])
    leak = np.zeros(probes.shape[0])
    top = V
    for m in range(probes.shape[0]):
        v0 = probes[m, 0]
        v1 = probes[m, 1]
        v2 = probes[m, 2]
        tot = 0.0
        wsum = 0.0
        wout = 0.0
        for j in range(fw.shape[0]):
            u0 = v0 - pts[j, 0]
            u1 = v1 - pts[j, 1]
            u2 = v2 - pts[j, 2]
            un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            if un == 0.0:
                continue
            s = 0.5 * (1.0 - gamma)
            ca0 = 0.5 * (v0 + pts[j, 0]) + s * u0
            ca1 = 0.5 * (v1 + pts[j, 1]) + s * u1
            ca2 = 0.5 * (v2 + pts[j, 2]) + s * u2
            cb0 = 0.5 * (v0 + pts[j, 0]) - s * u0
            cb1 = 0.5 * (v1 + pts[j, 1]) - s * u1
            cb2 = 0.5 * (v2 + pts[j, 2]) - s * u2
            R = 0.5 * gamma * un
            acc = 0.0
            for q in range(nq):
                a0 = ca0 + R * nodes[q, 0]
                a1 = ca1 + R * nodes[q, 1]
                a2 = ca2 + R * nodes[q, 2]
                b0 = cb0 - R * nodes[q, 0]
                b1 = cb1 - R * nodes[q, 1]
                b2 = cb2 - R * nodes[q, 2]
                wq = wts[q] * fw[j] * un
                a_out = abs(a0) > top or abs(a1) > top or abs(a2) > top
                b_out = abs(b0) > top or abs(b1) > top or abs(b2) > top
                if a_out or b_out:
                    # estimate the lost product with the outside point clamped onto the box
                    fa = interp(coef, V, h, _clamp(a0, top), _clamp(a1, top), _clamp(a2, top), order)
                    fb = interp(coef, V, h, _clamp(b0, top), _clamp(b1, top), _clamp(b2, top), order)
                    wout += wq * fa * fb
                    wsum += wq * fa * fb
                    continue
                fa = interp(coef, V, h, a0, a1, a2, order)
                if fa == 0.0:
                    continue
                fb = interp(coef, V, h, b0, b1, b2, order)
                wsum += wq * fa * fb
                acc += wts[q] * fa * fb
            tot += fw[j] * un * acc
        out[m] = tot
        leak[m] = wout / wsum if wsum > 0.0 else 0.0
    return out, leak


@njit(cache=True)
def _frame(m):
    if abs(m[0]) < 0.9:
        a0, a1, a2 = 1.0, 0.0, 0.0
    else:
        a0, a1, a2 = 0.0, 1.0, 0.0
    p = a0 * m[0] + a1 * m[1] + a2 * m[2]
    e1 = np.array([a0 - p * m[0], a1 - p * m[1], a2 - p * m[2]])
    e1 /= math.sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2])
    e2 = np.array([
        m[1] * e1[2] - m[2] * e1[1],
        m[2] * e1[0] - m[0] * e1[2],
        m[0] * e1[1] - m[1] * e1[0],
    ])
    return e1, e2


@njit(cache=True)
def plane_sum(coef, V, h, P, m, hp, order):
    """Trapezoid integral of the interpolant over the plane ``(x - P) . m = 0``.

    The in-plane lattice passes through ``P`` and the index window is centred
    on the foot of the perpendicular from the origin, large enough to cover
    the box.  Translating the data and ``P`` together therefore translates
    every sample point that lands in the box.
    """
    e1, e2 = _frame(m)
    d = P[0] * m[0] + P[1] * m[1] + P[2] * m[2]
    L = V * math.sqrt(3.0)
    if abs(d) > L:
        return 0.0
    rad = math.sqrt(L * L - d * d)
    # offset of the foot point d*m from P in the frame
    o1 = (d * m[0] - P[0]) * e1[0] + (d * m[1] - P[1]) * e1[1] + (d * m[2] - P[2]) * e1[2]
    o2 = (d * m[0] - P[0]) * e2[0] + (d * m[1] - P[1]) * e2[1] + (d * m[2] - P[2]) * e2[2]
    k1 = int(math.floor(o1 / hp + 0.5))
    k2 = int(math.floor(o2 / hp + 0.5))
    nside = int(math.ceil(rad / hp)) + 1
    s = 0.0
    for i in range(k1 - nside, k1 + nside + 1):
        for j in range(k2 - nside, k2 + nside + 1):
            x = P[0] + hp * (i * e1[0] + j * e2[0])
            y = P[1] + hp * (i * e1[1] + j * e2[1])
            z = P[2] + hp * (i * e1[2] + j * e2[2])
            if abs(x) > V or abs(y) > V or abs(z) > V:
                continue
            s += interp(coef, V, h, x, y, z, order)
    return s * hp * hp


@njit(cache=True)
def gain_carleman(coef, V, h, probes, beta, nodes, wts, xr, wr, hp, order):
    """Gain term from the plane representation in polar coordinates about ``v1``.

    With ``v = v1 - r omega`` the weight ``|v1 - v|^{-1} dv`` becomes
    ``r dr domega``, which removes the singularity at ``v = v1``.  The plane
    passes through ``P = v1 + (1/beta - 1) r omega`` with normal ``omega``.
    Radial integration uses Gauss-Legendre nodes on ``[0, r_max(omega)]`` where
    ``r_max`` is where the ray leaves the box.  Returns values without the
    ``1/beta^2`` prefactor.
    """
    nr = xr.shape[0]
    out = np.zeros(probes.shape[0])
    P = np.empty(3)
    om = np.empty(3)
    for mm in range(probes.shape[0]):
        v0 = probes[mm, 0]
        v1 = probes[mm, 1]
        v2 = probes[mm, 2]
        if abs(v0) > V or abs(v1) > V or abs(v2) > V:
            continue
        tot = 0.0
        for q in range(nodes.shape[0]):
            om[0] = nodes[q, 0]
            om[1] = nodes[q, 1]
            om[2] = nodes[q, 2]
            rmax = 1e300
            for d in range(3):
                vd = probes[mm, d]
                if om[d] > 1e-14:
                    rmax = min(rmax, (vd + V) / om[d])
                elif om[d] < -1e-14:
                    rmax = min(rmax, (vd - V) / om[d])
            sq = 0.0
            for k in range(nr):
                r = 0.5 * rmax * (xr[k] + 1.0)
                w = 0.5 * rmax * wr[k]
                fv = interp(coef, V, h, v0 - r * om[0], v1 - r * om[1], v2 - r * om[2], order)
                if fv == 0.0:
                    continue
                t = (1.0 / beta - 1.0) * r
                P[0] = v0 + t * om[0]
                P[1] = v1 + t * om[1]
                P[2] = v2 + t * om[2]
                sq += w * r * fv * plane_sum(coef, V, h, P, om, hp, order)
            tot += wts[q] * sq
        out[mm] = tot
    return out


# ---------------------------------------------------------------------------
# weak forms over node pairs
# ---------------------------------------------------------------------------


@njit(cache=True)
def weak_builtin(fw, pts, nodes, wts, beta, alpha):
    """Symmetrised weak form for the built-in test functions.

    Returns ``[one, v_x, v_y, v_z, |v|^2, defect]`` where the last entry is the
    same double sum with the energy-defect integrand written in sigma form,
    ``-(1 - alpha^2)/2 * (1 - u_hat . sigma)/2 * |u|^2``.
    """
    res = np.zeros(6)
    nq = nodes.shape[0]
    K = fw.shape[0]
    lossc = 0.5 * (1.0 - alpha * alpha)
    for a in range(K):
        va0 = pts[a, 0]
        va1 = pts[a, 1]
        va2 = pts[a, 2]
        ea = va0 * va0 + va1 * va1 + va2 * va2
        for b in range(a + 1, K):
            vb0 = pts[b, 0]
            vb1 = pts[b, 1]
            vb2 = pts[b, 2]
            eb = vb0 * vb0 + vb1 * vb1 + vb2 * vb2
            u0 = va0 - vb0
            u1 = va1 - vb1
            u2 = va2 - vb2
            un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            pref = fw[a] * fw[b] * 0.25 * un
            c0 = 0.5 * (va0 + vb0)
            c1 = 0.5 * (va1 + vb1)
            c2 = 0.5 * (va2 + vb2)
            d0 = 0.5 * (1.0 - beta) * u0
            d1 = 0.5 * (1.0 - beta) * u1
            d2 = 0.5 * (1.0 - beta) * u2
            R = 0.5 * beta * un
            hb = 0.5 * beta
            s1 = 0.0
            sx = 0.0
            sy = 0.0
            sz = 0.0
            se = 0.0
            sd = 0.0
            for q in range(nq):
                x0 = c0 + d0 + R * nodes[q, 0]
                x1 = c1 + d1 + R * nodes[q, 1]
                x2 = c2 + d2 + R * nodes[q, 2]
                y0 = c0 - d0 - R * nodes[q, 0]
                y1 = c1 - d1 - R * nodes[q, 1]
                y2 = c2 - d2 - R * nodes[q, 2]
                w = wts[q]
                s1 += w * (1.0 + 1.0 - 1.0 - 1.0)
                # increments v' - v and v_*' - v_* evaluated from the collision
                # rule; they are exact negatives, so linear moments cancel exactly
                g0 = R * nodes[q, 0] - hb * u0
                g1 = R * nodes[q, 1] - hb * u1
                g2 = R * nodes[q, 2] - hb * u2
                sx += w * (g0 + (hb * u0 - R * nodes[q, 0]))
                sy += w * (g1 + (hb * u1 - R * nodes[q, 1]))
                sz += w * (g2 + (hb * u2 - R * nodes[q, 2]))
                se += w * (x0 * x0 + x1 * x1 + x2 * x2 + y0 * y0 + y1 * y1 + y2 * y2 - ea - eb)
                if un > 0.0:
                    ud = (u0 * nodes[q, 0] + u1 * nodes[q, 1] + u2 * nodes[q, 2]) / un
                    sd += w * (-lossc * 0.5 * (1.0 - ud) * un * un)
            res[0] += pref * s1
            res[1] += pref * sx
            res[2] += pref * sy
            res[3] += pref * sz
            res[4] += pref * se
            res[5] += pref * sd
    return res


@njit(cache=True)
def gain_inverse_distance(fw, pts, beta, probes):
    """``int Q+(v1) |v1 - w|^{-1} dv1`` for each probe ``w``, exact in sigma.

    Uses the weak form of the gain term, where post-collision points for a
    pair sweep a sphere of radius ``beta |u|/2`` about
    ``c' = c + (1 - beta)/2 u``; the sphere average of ``|x - w|^{-1}`` is
    ``1/max(R, |c' - w|)``.
    """
    out = np.zeros(probes.shape[0])
    K = fw.shape[0]
    for m in range(probes.shape[0]):
        w0 = probes[m, 0]
        w1 = probes[m, 1]
        w2 = probes[m, 2]
        s = 0.0
        for a in range(K):
            for b in range(K):
                if a == b:
                    continue
                u0 = pts[a, 0] - pts[b, 0]
                u1 = pts[a, 1] - pts[b, 1]
                u2 = pts[a, 2] - pts[b, 2]
                un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
                k = 0.5 * (1.0 - beta)
                x0 = 0.5 * (pts[a, 0] + pts[b, 0]) + k * u0 - w0
                x1 = 0.5 * (pts[a, 1] + pts[b, 1]) + k * u1 - w1
                x2 = 0.5 * (pts[a, 2] + pts[b, 2]) + k * u2 - w2
                dist = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
                R = 0.5 * beta * un
                s += fw[a] * fw[b] * 0.25 * un * 4.0 * PI / max(R, dist)
        out[m] = s
    return out


@njit(cache=True)
def gain_on_plane(fw, pts, beta, P, mvec):
    """``int_E Q+ dE`` over the plane through ``P`` with unit normal ``mvec``.

    Each pair's post-collision sphere puts surface density ``2 pi / R`` (per
    unit sigma measure) on any plane that cuts it, so the pair contributes
    ``fw_a fw_b pi / beta`` when the plane meets the sphere and 0 otherwise.
    """
    K = fw.shape[0]
    s = 0.0
    for a in range(K):
        for b in range(K):
            if a == b:
                continue
            u0 = pts[a, 0] - pts[b, 0]
            u1 = pts[a, 1] - pts[b, 1]
            u2 = pts[a, 2] - pts[b, 2]
            un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            k = 0.5 * (1.0 - beta)
            x0 = 0.5 * (pts[a, 0] + pts[b, 0]) + k * u0 - P[0]
            x1 = 0.5 * (pts[a, 1] + pts[b, 1]) + k * u1 - P[1]
            x2 = 0.5 * (pts[a, 2] + pts[b, 2]) + k * u2 - P[2]
            dist = abs(x0 * mvec[0] + x1 * mvec[1] + x2 * mvec[2])
            if dist < 0.5 * beta * un:
                s += fw[a] * fw[b] * PI / beta
    return s


@njit(cache=True, inline="always")
def _lagrange3(t, out):
    out[0] = 0.5 * t * (t - 1.0)
    out[1] = 1.0 - t * t
    out[2] = 0.5 * t * (t + 1.0)


@njit(cache=True)
def _deposit(G, V, h, x, y, z, wt, lx, ly, lz):
    """Spread ``wt`` onto the 27 nodes around ``(x, y, z)``.

    Quadratic Lagrange weights reproduce 1, v and |v|^2 exactly, so deposited
    mass, momentum and energy equal those of the point.  Returns False when
    the point is outside the box (nothing deposited).
    """
    n = G.shape[0]
    gx = (x + V) / h
    gy = (y + V) / h
    gz = (z + V) / h
    top = n - 1.0
    if gx < 0.0 or gy < 0.0 or gz < 0.0 or gx > top or gy > top or gz > top:
        return False
    i = min(max(int(math.floor(gx + 0.5)), 1), n - 2)
    j = min(max(int(math.floor(gy + 0.5)), 1), n - 2)
    k = min(max(int(math.floor(gz + 0.5)), 1), n - 2)
    _lagrange3(gx - i, lx)
    _lagrange3(gy - j, ly)
    _lagrange3(gz - k, lz)
    for a in range(3):
        wa = wt * lx[a]
        for b in range(3):
            wab = wa * ly[b]
            for c in range(3):
                G[i - 1 + a, j - 1 + b, k - 1 + c] += wab * lz[c]
    return True


@njit(cache=True)
def euler_terms(fw, pts, n, V, h, nodes, wts, beta, thr):
    """Gain deposit and loss frequency for one explicit step.

    ``fw`` must be sorted in decreasing order.  Pairs with
    ``fw_a * fw_b < thr`` are skipped; the same pairs are skipped in the loss
    so that mass is balanced exactly.  Returns ``(G, L, leak_mass,
    leak_energy)`` where ``G`` is the deposited gain (to be divided by the
    trapezoid weights) and ``L[a]`` the loss frequency at node ``a``.
    """
    G = np.zeros((n, n, n))
    K = fw.shape[0]
    L = np.zeros(K)
    lx = np.empty(3)
    ly = np.empty(3)
    lz = np.empty(3)
    nq = nodes.shape[0]
    leak_m = 0.0
    leak_e = 0.0
    for a in range(K):
        if fw[a] * fw[0] < thr:
            break
        for b in range(a + 1, K):
            W = fw[a] * fw[b]
            if W < thr:
                break
            u0 = pts[a, 0] - pts[b, 0]
            u1 = pts[a, 1] - pts[b, 1]
            u2 = pts[a, 2] - pts[b, 2]
            un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            L[a] += fw[b] * PI * un
            L[b] += fw[a] * PI * un
            pref = W * 0.25 * un
            c0 = 0.5 * (pts[a, 0] + pts[b, 0])
            c1 = 0.5 * (pts[a, 1] + pts[b, 1])
            c2 = 0.5 * (pts[a, 2] + pts[b, 2])
            d0 = 0.5 * (1.0 - beta) * u0
            d1 = 0.5 * (1.0 - beta) * u1
            d2 = 0.5 * (1.0 - beta) * u2
            R = 0.5 * beta * un
            for q in range(nq):
                s0 = R * nodes[q, 0]
                s1 = R * nodes[q, 1]
                s2 = R * nodes[q, 2]
                wq = pref * wts[q]
                x0 = c0 + d0 + s0
                x1 = c1 + d1 + s1
                x2 = c2 + d2 + s2
                if not _deposit(G, V, h, x0, x1, x2, wq, lx, ly, lz):
                    leak_m += wq
                    leak_e += wq * (x0 * x0 + x1 * x1 + x2 * x2)
                y0 = c0 - d0 - s0
                y1 = c1 - d1 - s1
                y2 = c2 - d2 - s2
                if not _deposit(G, V, h, y0, y1, y2, wq, lx, ly, lz):
                    leak_m += wq
                    leak_e += wq * (y0 * y0 + y1 * y1 + y2 * y2)
    return G, L, leak_m, leak_e


# ---------------------------------------------------------------------------
# particles
# ---------------------------------------------------------------------------


@njit(cache=True)
def kde_eval(x, w, probes, h, cutoff):
    """Gaussian kernel density estimate at each probe (kernel cut at ``cutoff*h``)."""
    norm = (2.0 * PI * h * h) ** -1.5
    r2max = (cutoff * h) ** 2
    inv = 0.5 / (h * h)
    out = np.zeros(probes.shape[0])
    for m in range(probes.shape[0]):
        p0 = probes[m, 0]
        p1 = probes[m, 1]
        p2 = probes[m, 2]
        s = 0.0
        for i in range(x.shape[0]):
            d0 = p0 - x[i, 0]
            d1 = p1 - x[i, 1]
            d2 = p2 - x[i, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            if r2 < r2max:
                s += w[i] * math.exp(-r2 * inv)
        out[m] = s * norm
    return out


@njit(cache=True)
def apply_collision(vel, i, j, n0, n1, n2, beta, alpha):
    """Collide particles ``i`` and ``j`` in place along ``n``; returns the energy defect.

    The sign of ``n`` is flipped if needed so that ``cos(theta) >= 0``; the
    post-collision state does not depend on that sign.
    """
    u0 = vel[i, 0] - vel[j, 0]
    u1 = vel[i, 1] - vel[j, 1]
    u2 = vel[i, 2] - vel[j, 2]
    un = u0 * n0 + u1 * n1 + u2 * n2
    if un > 0.0:
        n0 = -n0
        n1 = -n1
        n2 = -n2
        un = -un
    s = beta * un
    vel[i, 0] = vel[i, 0] - s * n0
    vel[i, 1] = vel[i, 1] - s * n1
    vel[i, 2] = vel[i, 2] - s * n2
    vel[j, 0] = vel[j, 0] + s * n0
    vel[j, 1] = vel[j, 1] + s * n1
    vel[j, 2] = vel[j, 2] + s * n2
    return -0.5 * (1.0 - alpha * alpha) * un * un


@njit(cache=True)
def dsmc_collide(vel, rnd, vmaj, beta, alpha):
    """Process candidate pairs in order.

    Row ``c`` of ``rnd`` holds five uniforms: two pick an ordered pair of
    distinct particles, two give ``n`` uniform on the sphere and the last is
    the acceptance draw against ``|u . n| / vmaj``.  Returns
    ``(accepted, defect_sum, bad_index, bad_speed)``; ``bad_index >= 0`` means
    the majorant was exceeded at that candidate and the state is partially
    updated (the caller must discard it).
    """
    N = vel.shape[0]
    acc = 0
    defect = 0.0
    for c in range(rnd.shape[0]):
        i = int(rnd[c, 0] * N)
        if i >= N:
            i = N - 1
        j = int(rnd[c, 1] * (N - 1))
        if j >= N - 1:
            j = N - 2
        if j >= i:
            j += 1
        z = 2.0 * rnd[c, 2] - 1.0
        phi = 2.0 * PI * rnd[c, 3]
        st = math.sqrt(max(0.0, 1.0 - z * z))
        n0 = st * math.cos(phi)
        n1 = st * math.sin(phi)
        n2 = z
        u0 = vel[i, 0] - vel[j, 0]
        u1 = vel[i, 1] - vel[j, 1]
        u2 = vel[i, 2] - vel[j, 2]
        g = abs(u0 * n0 + u1 * n1 + u2 * n2)
        if g > vmaj:
            return acc, defect, c, g
        if rnd[c, 4] * vmaj < g:
            defect += apply_collision(vel, i, j, n0, n1, n2, beta, alpha)
            acc += 1
    return acc, defect, -1, 0.0


@njit(cache=True)
def sum_sq(vel):
    s = 0.0
    for i in range(vel.shape[0]):
        s += vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1] + vel[i, 2] * vel[i, 2]
    return s


@njit(cache=True)
def max_speed(vel):
    m = 0.0
    for i in range(vel.shape[0]):
        s = vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1] + vel[i, 2] * vel[i, 2]
        if s > m:
            m = s
    return math.sqrt(m)
