"""Compiled row-block kernel for the spatial operator.

Evaluates exactly the same discrete operator as the vectorized reference in
:mod:`debris2p.solver` (same reconstruction, face states, sources and edge
treatment) in a single fused pass over a block of rows. Kernels release the
GIL so the thread backend runs blocks concurrently.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NG = 3


@njit(cache=True, inline="always")
def _minmod(a, b):
    return max(min(a, b), 0.0) + min(max(a, b), 0.0)


@njit(cache=True, inline="always")
def _wave(hs, hf, c, k, eps):
    h = hs + hf
    m11 = k * (h + hs) / 2.0
    m12 = k * hs / 2.0
    tr = m11 + h
    det = h * (m11 - m12)
    disc = math.sqrt(max(tr * tr - 4.0 * det, 0.0))
    return math.sqrt(eps * c * ((tr + disc) / 2.0))


@njit(cache=True, nogil=True)
def _extrapolate(f, lo_x, hi_x, lo_y, hi_y, nx, m, order):
    """First ghost ring at global edges, columns then rows (matches the reference)."""
    rows, cols = f.shape
    if lo_x:
        for r in range(rows):
            a, b, c = f[r, NG], f[r, NG + 1], f[r, NG + 2]
            f[r, NG - 1] = 2.0 * a - b if order == 1 else 3.0 * a - 3.0 * b + c
    if hi_x:
        e = NG + nx - 1
        for r in range(rows):
            a, b, c = f[r, e], f[r, e - 1], f[r, e - 2]
            f[r, e + 1] = 2.0 * a - b if order == 1 else 3.0 * a - 3.0 * b + c
    if lo_y:
        for q in range(cols):
            a, b, c = f[NG, q], f[NG + 1, q], f[NG + 2, q]
            f[NG - 1, q] = 2.0 * a - b if order == 1 else 3.0 * a - 3.0 * b + c
    if hi_y:
        e = NG + m - 1
        for q in range(cols):
            a, b, c = f[e, q], f[e - 1, q], f[e - 2, q]
            f[e + 1, q] = 2.0 * a - b if order == 1 else 3.0 * a - 3.0 * b + c


@njit(cache=True, nogil=True)
def rhs_rows(U, J, c, A, n, dn_dxi, dn_deta, j0, j1, ny, dx, dy, prm, R, speed, rates):
    """Right-hand side on interior rows ``[j0, j1)``.

    ``U`` and the geometry arrays are the full padded fields. ``prm`` packs
    ``(alpha, eps, curv, C_d, fluid_rate, N_R, eps_h, h_dry,
    weight_is_phi_f)``. Writes ``R[:, j0:j1]`` and ``speed[j0:j1]``;
    ``rates`` (2, 2) receives (inflow, outflow) volume rates per phase.
    """
    alpha, eps, curv, C_d, frate, N_R = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5]
    eps_h, h_dry, w_phi_f = prm[6], prm[7], prm[8] > 0.5
    k = 1.0 - alpha
    nx = U.shape[2] - 2 * NG
    m = j1 - j0
    mb = m + 2 * NG
    nxp = nx + 2 * NG
    base = j0  # padded row of local block row 0

    # primitive fields on the block: ws, wf, vsx, vsy, vfx, vfy
    P6 = np.empty((6, mb, nxp))
    for r in range(mb):
        gr = base + r
        for q in range(nxp):
            jac = J[gr, q]
            for ph in range(2):
                w = U[ph, gr, q]
                P6[ph, r, q] = w
                h = w / jac
                hm = max(h, eps_h)
                fac = 2.0 * h / (h * h + hm * hm)
                P6[2 + 2 * ph, r, q] = U[2 + 2 * ph, gr, q] * fac / jac
                P6[3 + 2 * ph, r, q] = U[3 + 2 * ph, gr, q] * fac / jac

    # xi faces: rows NG..NG+m-1, faces between cols NG-1+f and NG+f
    Hx = np.empty((6, m, nx + 1))
    ax = np.empty((m, nx + 1))
    # eta faces: face rows between local rows NG-1+f and NG+f, interior cols
    Hy = np.empty((6, m + 1, nx))
    ay = np.empty((m + 1, nx))
    vm = np.empty(6)
    vp = np.empty(6)
    Hk = np.empty(6)
    um = np.empty(6)
    fm = np.empty(6)
    for axis in range(2):
        nrow = m if axis == 1 else m + 1
        ncol = nx + 1 if axis == 1 else nx
        for fr in range(nrow):
            for fc in range(ncol):
                if axis == 1:
                    r, q = NG + fr, NG - 1 + fc
                    r2, q2 = r, q + 1
                    ru, qu, rd, qd = r, q - 1, r, q + 2
                else:
                    r, q = NG - 1 + fr, NG + fc
                    r2, q2 = r + 1, q
                    ru, qu, rd, qd = r - 1, q, r + 2, q
                for f in range(6):
                    f0 = P6[f, ru, qu]
                    f1 = P6[f, r, q]
                    f2 = P6[f, r2, q2]
                    f3 = P6[f, rd, qd]
                    vm[f] = f1 + 0.5 * _minmod(f1 - f0, f2 - f1)
                    vp[f] = f2 - 0.5 * _minmod(f2 - f1, f3 - f2)
                # one-sided states: (cons, flux, speed) with each cell's own geometry
                out_a = 0.0
                for side in range(2):
                    vals = vm if side == 0 else vp
                    gr = base + (r if side == 0 else r2)
                    gq = q if side == 0 else q2
                    jac = J[gr, gq]
                    cc = c[gr, gq]
                    if axis == 1:
                        a_nn, a_nt = A[0, 0, gr, gq], A[0, 1, gr, gq]
                        vns, vts, vnf, vtf = vals[2], vals[3], vals[4], vals[5]
                    else:
                        a_nn, a_nt = A[1, 1, gr, gq], A[1, 0, gr, gq]
                        vns, vts, vnf, vtf = vals[3], vals[2], vals[5], vals[4]
                    ws, wf = vals[0], vals[1]
                    hs = ws / jac
                    hf = wf / jac
                    h = hs + hf
                    ns = cc * k * hs / 2.0
                    pf = cc * h / 2.0
                    ms = ws * vns
                    ps = eps * jac * h * ns
                    mf = wf * vnf
                    pp = eps * jac * h * pf
                    cons0, cons1, cons2, cons3, cons4, cons5 = ws, wf, ws * vns, ws * vts, wf * vnf, wf * vtf
                    fl0, fl1 = ms, mf
                    fl2 = ms * vns + ps * a_nn
                    fl3 = ms * vts + ps * a_nt
                    fl4 = mf * vnf + pp * a_nn
                    fl5 = mf * vtf + pp * a_nt
                    if h > h_dry:
                        sp = max(abs(vns), abs(vnf)) + _wave(hs, hf, cc, k, eps)
                    else:
                        sp = 0.0
                    if side == 0:
                        um[0], um[1], um[2], um[3], um[4], um[5] = cons0, cons1, cons2, cons3, cons4, cons5
                        fm[0], fm[1], fm[2], fm[3], fm[4], fm[5] = fl0, fl1, fl2, fl3, fl4, fl5
                        out_a = sp
                    else:
                        a = max(out_a, sp)
                        Hk[0] = 0.5 * (fm[0] + fl0) - 0.5 * a * (cons0 - um[0])
                        Hk[1] = 0.5 * (fm[1] + fl1) - 0.5 * a * (cons1 - um[1])
                        Hk[2] = 0.5 * (fm[2] + fl2) - 0.5 * a * (cons2 - um[2])
                        Hk[3] = 0.5 * (fm[3] + fl3) - 0.5 * a * (cons3 - um[3])
                        Hk[4] = 0.5 * (fm[4] + fl4) - 0.5 * a * (cons4 - um[4])
                        Hk[5] = 0.5 * (fm[5] + fl5) - 0.5 * a * (cons5 - um[5])
                        out_a = a
                if axis == 1:
                    for f in range(6):
                        Hx[f, fr, fc] = Hk[f]
                    ax[fr, fc] = out_a
                else:
                    for f in range(6):
                        Hy[f, fr, fc] = Hk[f]
                    ay[fr, fc] = out_a

    lo_y = j0 == 0
    hi_y = j1 == ny

    # J h p_bar_f with edge extrapolation, for the buoyancy gradients
    Pb = np.empty((mb, nxp))
    for r in range(mb):
        for q in range(nxp):
            gr = base + r
            hh = P6[0, r, q] / J[gr, q] + P6[1, r, q] / J[gr, q]
            Pb[r, q] = J[gr, q] * hh * (c[gr, q] * hh / 2.0)
    _extrapolate(Pb, True, True, lo_y, hi_y, nx, m, 2)

    # viscous stresses on interior cells plus one ring
    vx = P6[4].copy()
    vy = P6[5].copy()
    _extrapolate(vx, True, True, lo_y, hi_y, nx, m, 1)
    _extrapolate(vy, True, True, lo_y, hi_y, nx, m, 1)
    T1 = np.zeros((mb, nxp))
    T2 = np.zeros((mb, nxp))
    T3 = np.zeros((mb, nxp))
    for r in range(NG - 1, NG + m + 1):
        gr = base + r
        for q in range(NG - 1, NG + nx + 1):
            axx = _minmod(vx[r, q] - vx[r, q - 1], vx[r, q + 1] - vx[r, q]) / dx
            ayy = _minmod(vx[r, q] - vx[r - 1, q], vx[r + 1, q] - vx[r, q]) / dy
            bxx = _minmod(vy[r, q] - vy[r, q - 1], vy[r, q + 1] - vy[r, q]) / dx
            byy = _minmod(vy[r, q] - vy[r - 1, q], vy[r + 1, q] - vy[r, q]) / dy
            jac = J[gr, q]
            hh = P6[0, r, q] / jac + P6[1, r, q] / jac
            jh = jac * hh
            a00, a01, a10, a11 = A[0, 0, gr, q], A[0, 1, gr, q], A[1, 0, gr, q], A[1, 1, gr, q]
            T1[r, q] = jh * (a00 * axx + a10 * ayy)
            T2[r, q] = jh * ((a01 * axx + a10 * byy) + (a11 * ayy + a00 * bxx))
            T3[r, q] = jh * (a01 * bxx + a11 * byy)
    _extrapolate(T1, True, True, lo_y, hi_y, nx, m, 2)
    _extrapolate(T2, True, True, lo_y, hi_y, nx, m, 2)
    _extrapolate(T3, True, True, lo_y, hi_y, nx, m, 2)

    dxv = np.empty(6)
    dyv = np.empty(6)
    for lr in range(m):
        r = NG + lr
        gr = base + r
        for i in range(nx):
            q = NG + i
            jac = J[gr, q]
            cc = c[gr, q]
            hs = P6[0, r, q] / jac
            hf = P6[1, r, q] / jac
            h = hs + hf
            phi_s = hs / h if h > 0.0 else 0.0
            phi_f = hf / h if h > 0.0 else 0.0
            vsx, vsy, vfx, vfy = P6[2, r, q], P6[3, r, q], P6[4, r, q], P6[5, r, q]
            n0, n1, n2 = n[0, gr, q], n[1, gr, q], n[2, gr, q]
            d0, d1, d2 = dn_dxi[0, gr, q], dn_dxi[1, gr, q], dn_dxi[2, gr, q]
            e0, e1, e2 = dn_deta[0, gr, q], dn_deta[1, gr, q], dn_deta[2, gr, q]
            vz = -(n0 * vsx + n1 * vsy) / n2
            kap_s = (vsx * (d0 * vsx + e0 * vsy) + vsy * (d1 * vsx + e1 * vsy)) + vz * (d2 * vsx + e2 * vsy)
            vz = -(n0 * vfx + n1 * vfy) / n2
            kap_f = (vfx * (d0 * vfx + e0 * vfy) + vfy * (d1 * vfx + e1 * vfy)) + vz * (d2 * vfx + e2 * vfy)
            pbs = max(hs * (cc * k - curv * kap_s), 0.0)
            pbf = max(hf * (cc - curv * kap_f), 0.0)

            gx = (Pb[r, q + 1] - Pb[r, q - 1]) / (2.0 * dx)
            gy = (Pb[r + 1, q] - Pb[r - 1, q]) / (2.0 * dy)
            a00, a01, a10, a11 = A[0, 0, gr, q], A[0, 1, gr, q], A[1, 0, gr, q], A[1, 1, gr, q]
            dpx = a00 * gx + a10 * gy
            dpy = a01 * gx + a11 * gy
            coef = jac * C_d * phi_s * phi_f * h
            Dx = coef * (vfx - vsx)
            Dy = coef * (vfy - vsy)
            weight = phi_f if w_phi_f else phi_s
            fs = -eps * alpha * phi_s
            ff = eps * weight
            dfr = -(jac * phi_f * h * frate)
            vis_c = eps * phi_f / N_R
            visx = 2.0 * ((T1[r, q + 1] - T1[r, q - 1]) / (2.0 * dx)) + (T2[r + 1, q] - T2[r - 1, q]) / (2.0 * dy)
            visy = 2.0 * ((T3[r + 1, q] - T3[r - 1, q]) / (2.0 * dy)) + (T2[r, q + 1] - T2[r, q - 1]) / (2.0 * dx)

            ssx = (jac * pbs * n0 + fs * dpx) + alpha * Dx
            ssy = (jac * pbs * n1 + fs * dpy) + alpha * Dy
            sfx = (((jac * pbf * n0 + ff * dpx) + dfr * vfx) + (-Dx)) + vis_c * visx
            sfy = (((jac * pbf * n1 + ff * dpy) + dfr * vfy) + (-Dy)) + vis_c * visy

            for f in range(6):
                dxv[f] = (Hx[f, lr, i + 1] - Hx[f, lr, i]) / dx
            for f in range(6):
                dyv[f] = (Hy[f, lr + 1, i] - Hy[f, lr, i]) / dy
            R[0, j0 + lr, i] = -(dxv[0] + dyv[0])
            R[1, j0 + lr, i] = -(dxv[1] + dyv[1])
            R[2, j0 + lr, i] = ssx - (dxv[2] + dyv[3])
            R[3, j0 + lr, i] = ssy - (dxv[3] + dyv[2])
            R[4, j0 + lr, i] = sfx - (dxv[4] + dyv[5])
            R[5, j0 + lr, i] = sfy - (dxv[5] + dyv[4])

            if h > h_dry:
                cw = _wave(hs, hf, cc, k, eps)
                lam = max(max(abs(vsx), abs(vfx)) + cw, max(abs(vsy), abs(vfy)) + cw)
            else:
                lam = 0.0
            sp = max(lam, max(ax[lr, i], ax[lr, i + 1]))
            speed[j0 + lr, i] = max(sp, max(ay[lr, i], ay[lr + 1, i]))

    # boundary volume rates, positive = into the domain
    for ph in range(2):
        inflow = 0.0
        outflow = 0.0
        for lr in range(m):
            lo = Hx[ph, lr, 0]
            hi = Hx[ph, lr, nx]
            inflow += (max(lo, 0.0) + max(-hi, 0.0)) * dy
            outflow += (max(-lo, 0.0) + max(hi, 0.0)) * dy
        if lo_y:
            for i in range(nx):
                lo = Hy[ph, 0, i]
                inflow += max(lo, 0.0) * dx
                outflow += max(-lo, 0.0) * dx
        if hi_y:
            for i in range(nx):
                hi = Hy[ph, m, i]
                inflow += max(-hi, 0.0) * dx
                outflow += max(hi, 0.0) * dx
        rates[0, ph] = inflow
        rates[1, ph] = outflow


@njit(cache=True, nogil=True)
def stage_rows(U_base, U_in, R, dt, out, avg, use_avg, J, c, n, dn_dxi, dn_deta, j0, j1,
               prm, tan_delta, speed_floor, result):
    """Stage update on interior rows ``[j0, j1)``, mirroring ``Solver._stage``.

    ``out = U_base + dt R``, then capped Coulomb friction (basal pressure from
    ``U_in``), optional averaging with ``avg`` and regularization. ``result``
    receives ``(clipped_s, clipped_f, worst_h, worst_k, worst_i, worst_j)``.
    """
    alpha, curv = prm[0], prm[2]
    eps_h, h_dry = prm[6], prm[7]
    k = 1.0 - alpha
    nx = out.shape[2] - 2 * NG
    clip_s = 0.0
    clip_f = 0.0
    worst = 0.0
    wk, wi, wj = -1, -1, -1
    for j in range(j0, j1):
        gr = NG + j
        for i in range(nx):
            q = NG + i
            for f in range(6):
                out[f, gr, q] = U_base[f, gr, q] + dt * R[f, j, i]
            jac = J[gr, q]
            cc = c[gr, q]
            n0, n1, n2 = n[0, gr, q], n[1, gr, q], n[2, gr, q]
            # basal pressure of the stage input
            w_in = U_in[0, gr, q]
            hs_in = w_in / jac
            hm = max(hs_in, eps_h)
            fac = 2.0 * hs_in / (hs_in * hs_in + hm * hm)
            vx = U_in[2, gr, q] * fac / jac
            vy = U_in[3, gr, q] * fac / jac
            vz = -(n0 * vx + n1 * vy) / n2
            d0, d1, d2 = dn_dxi[0, gr, q], dn_dxi[1, gr, q], dn_dxi[2, gr, q]
            e0, e1, e2 = dn_deta[0, gr, q], dn_deta[1, gr, q], dn_deta[2, gr, q]
            kap = (vx * (d0 * vx + e0 * vy) + vy * (d1 * vx + e1 * vy)) + vz * (d2 * vx + e2 * vy)
            pbs = max(hs_in * (cc * k - curv * kap), 0.0)
            # friction impulse on the updated solid momentum
            ws = out[0, gr, q]
            hs = ws / jac
            hm = max(hs, eps_h)
            fac = 2.0 * hs / (hs * hs + hm * hm)
            qx = out[2, gr, q]
            qy = out[3, gr, q]
            vx = qx * fac / jac
            vy = qy * fac / jac
            vh = math.sqrt(vx * vx + vy * vy)
            vz = -(n0 * vx + n1 * vy) / n2
            s3 = math.sqrt((vx * vx + vy * vy) + vz * vz)
            impulse = dt * jac * pbs * tan_delta * vh / max(s3, speed_floor)
            qn = math.sqrt(qx * qx + qy * qy)
            keep = (qn - impulse) / qn if qn > impulse else 0.0
            out[2, gr, q] = qx * keep
            out[3, gr, q] = qy * keep
            if use_avg:
                for f in range(6):
                    out[f, gr, q] = 0.5 * avg[f, gr, q] + 0.5 * out[f, gr, q]
            for ph in range(2):
                w = out[ph, gr, q]
                if w < 0.0:
                    h = w / jac
                    if h < worst:
                        worst, wk, wi, wj = h, ph, i, j
                    if ph == 0:
                        clip_s += -w
                    else:
                        clip_f += -w
                    out[ph, gr, q] = 0.0
                    w = 0.0
                if w < h_dry * jac:
                    out[2 + 2 * ph, gr, q] = 0.0
                    out[3 + 2 * ph, gr, q] = 0.0
    result[0] = clip_s
    result[1] = clip_f
    result[2] = worst
    result[3] = wk
    result[4] = wi
    result[5] = wj
