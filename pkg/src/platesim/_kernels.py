"""Numba kernels for the MLS-MPM stepper and particle utilities.

Particle loops are serial with fixed index order, so grid scatter is
bit-deterministic. Status codes returned by the kernels:

    0 ok
    1 particle outside the valid stencil region (blowup)
    2 deformation gradient inverted
"""

import numpy as np
from numba import njit

from ._sdf import tool_sdf_world

OK = 0
ERR_STENCIL = 1
ERR_INVERTED = 2

MODEL_ELASTIC = 0
MODEL_PLASTIC = 1
MODEL_ELASTOPLASTIC = 2

FRICTION_PLATE = 0
FRICTION_FORK = 1


@njit(cache=True, nogil=True)
def polar_rotation(
    f00, f01, f02, f10, f11, f12, f20, f21, f22
):
    """Rotation factor of F by Higham's iteration R <- (R + R^-T) / 2."""
    a, b, c = f00, f01, f02
    d, e, f = f10, f11, f12
    g, h, i = f20, f21, f22
    for _ in range(24):
        det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
        # inverse transpose via the adjugate
        it00 = (e * i - f * h) / det
        it01 = (f * g - d * i) / det
        it02 = (d * h - e * g) / det
        it10 = (c * h - b * i) / det
        it11 = (a * i - c * g) / det
        it12 = (b * g - a * h) / det
        it20 = (b * f - c * e) / det
        it21 = (c * d - a * f) / det
        it22 = (a * e - b * d) / det
        n00 = 0.5 * (a + it00)
        n01 = 0.5 * (b + it01)
        n02 = 0.5 * (c + it02)
        n10 = 0.5 * (d + it10)
        n11 = 0.5 * (e + it11)
        n12 = 0.5 * (f + it12)
        n20 = 0.5 * (g + it20)
        n21 = 0.5 * (h + it21)
        n22 = 0.5 * (i + it22)
        diff = (
            abs(n00 - a) + abs(n01 - b) + abs(n02 - c)
            + abs(n10 - d) + abs(n11 - e) + abs(n12 - f)
            + abs(n20 - g) + abs(n21 - h) + abs(n22 - i)
        )
        a, b, c, d, e, f, g, h, i = n00, n01, n02, n10, n11, n12, n20, n21, n22
        if diff < 1e-13:
            break
    return a, b, c, d, e, f, g, h, i


@njit(cache=True, nogil=True)
def jacobi_eig3(a00, a01, a02, a11, a12, a22):
    """Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi.

    Returns (w0, w1, w2, V) with columns of V the eigenvectors.
    """
    s = np.empty((3, 3))
    s[0, 0] = a00
    s[0, 1] = a01
    s[0, 2] = a02
    s[1, 0] = a01
    s[1, 1] = a11
    s[1, 2] = a12
    s[2, 0] = a02
    s[2, 1] = a12
    s[2, 2] = a22
    v = np.eye(3)
    for _ in range(16):
        off = abs(s[0, 1]) + abs(s[0, 2]) + abs(s[1, 2])
        scale = abs(s[0, 0]) + abs(s[1, 1]) + abs(s[2, 2]) + 1e-300
        if off < 1e-15 * scale:
            break
        for p in range(2):
            for q in range(p + 1, 3):
                if abs(s[p, q]) < 1e-300:
                    continue
                theta = (s[q, q] - s[p, p]) / (2.0 * s[p, q])
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                for k in range(3):
                    skp = s[k, p]
                    skq = s[k, q]
                    s[k, p] = c * skp - sn * skq
                    s[k, q] = sn * skp + c * skq
                for k in range(3):
                    spk = s[p, k]
                    sqk = s[q, k]
                    s[p, k] = c * spk - sn * sqk
                    s[q, k] = sn * spk + c * sqk
                for k in range(3):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - sn * vkq
                    v[k, q] = sn * vkp + c * vkq
    return s[0, 0], s[1, 1], s[2, 2], v


@njit(cache=True, nogil=True)
def vonmises_project(
    f00, f01, f02, f10, f11, f12, f20, f21, f22, mu, sigma_y
):
    """Hencky-strain von Mises return map on F; returns the 9 entries + ok flag."""
    c00 = f00 * f00 + f10 * f10 + f20 * f20
    c01 = f00 * f01 + f10 * f11 + f20 * f21
    c02 = f00 * f02 + f10 * f12 + f20 * f22
    c11 = f01 * f01 + f11 * f11 + f21 * f21
    c12 = f01 * f02 + f11 * f12 + f21 * f22
    c22 = f02 * f02 + f12 * f12 + f22 * f22
    w0, w1, w2, v = jacobi_eig3(c00, c01, c02, c11, c12, c22)
    if w0 <= 0.0 or w1 <= 0.0 or w2 <= 0.0:
        return f00, f01, f02, f10, f11, f12, f20, f21, f22, False
    s0 = np.sqrt(w0)
    s1 = np.sqrt(w1)
    s2 = np.sqrt(w2)
    e0 = np.log(s0)
    e1 = np.log(s1)
    e2 = np.log(s2)
    tr = (e0 + e1 + e2) / 3.0
    d0 = e0 - tr
    d1 = e1 - tr
    d2 = e2 - tr
    norm = 2.0 * mu * np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    if norm <= sigma_y:
        return f00, f01, f02, f10, f11, f12, f20, f21, f22, True
    scale = sigma_y / norm
    n0 = np.exp(d0 * scale + tr)
    n1 = np.exp(d1 * scale + tr)
    n2 = np.exp(d2 * scale + tr)
    # U = F V diag(1/s); F_new = U diag(n) V^T = F V diag(n/s) V^T
    r0 = n0 / s0
    r1 = n1 / s1
    r2 = n2 / s2
    # M = V diag(r) V^T (symmetric)
    m00 = r0 * v[0, 0] * v[0, 0] + r1 * v[0, 1] * v[0, 1] + r2 * v[0, 2] * v[0, 2]
    m01 = r0 * v[0, 0] * v[1, 0] + r1 * v[0, 1] * v[1, 1] + r2 * v[0, 2] * v[1, 2]
    m02 = r0 * v[0, 0] * v[2, 0] + r1 * v[0, 1] * v[2, 1] + r2 * v[0, 2] * v[2, 2]
    m11 = r0 * v[1, 0] * v[1, 0] + r1 * v[1, 1] * v[1, 1] + r2 * v[1, 2] * v[1, 2]
    m12 = r0 * v[1, 0] * v[2, 0] + r1 * v[1, 1] * v[2, 1] + r2 * v[1, 2] * v[2, 2]
    m22 = r0 * v[2, 0] * v[2, 0] + r1 * v[2, 1] * v[2, 1] + r2 * v[2, 2] * v[2, 2]
    g00 = f00 * m00 + f01 * m01 + f02 * m02
    g01 = f00 * m01 + f01 * m11 + f02 * m12
    g02 = f00 * m02 + f01 * m12 + f02 * m22
    g10 = f10 * m00 + f11 * m01 + f12 * m02
    g11 = f10 * m01 + f11 * m11 + f12 * m12
    g12 = f10 * m02 + f11 * m12 + f12 * m22
    g20 = f20 * m00 + f21 * m01 + f22 * m02
    g21 = f20 * m01 + f21 * m11 + f22 * m12
    g22 = f20 * m02 + f21 * m12 + f22 * m22
    return g00, g01, g02, g10, g11, g12, g20, g21, g22, True


@njit(cache=True, nogil=True)
def p2g(
    x, v, c_mat, f_mat, jp, mass, vol, matid,
    mat_class, mat_mu, mat_lam, mat_kappa, mat_fric_plate, mat_fric_fork,
    gm, gv, gfp, gff, dx, dt, n,
):
    """Scatter particle mass/momentum (APIC + fused stress) to the grid."""
    gm[:, :, :] = 0.0
    gv[:, :, :, :] = 0.0
    gfp[:, :, :] = 0.0
    gff[:, :, :] = 0.0
    inv_dx = 1.0 / dx
    stress_coeff = -dt * 4.0 * inv_dx * inv_dx
    for p in range(x.shape[0]):
        mid = matid[p]
        cls = mat_class[mid]
        mu = mat_mu[mid]
        lam = mat_lam[mid]

        f00 = f_mat[p, 0, 0]
        f01 = f_mat[p, 0, 1]
        f02 = f_mat[p, 0, 2]
        f10 = f_mat[p, 1, 0]
        f11 = f_mat[p, 1, 1]
        f12 = f_mat[p, 1, 2]
        f20 = f_mat[p, 2, 0]
        f21 = f_mat[p, 2, 1]
        f22 = f_mat[p, 2, 2]

        # stress term P(F) F^T, by constitutive class
        if cls == MODEL_PLASTIC:
            j = jp[p]
            s_iso = mat_kappa[mid] * j * (j - 1.0)
            st00 = s_iso
            st11 = s_iso
            st22 = s_iso
            st01 = 0.0
            st02 = 0.0
            st10 = 0.0
            st12 = 0.0
            st20 = 0.0
            st21 = 0.0
        else:
            # fixed corotated: P F^T = 2 mu (F - R) F^T + lam J (J - 1) I
            j = (
                f00 * (f11 * f22 - f12 * f21)
                - f01 * (f10 * f22 - f12 * f20)
                + f02 * (f10 * f21 - f11 * f20)
            )
            if j <= 0.0:
                return ERR_INVERTED, p
            r00, r01, r02, r10, r11, r12, r20, r21, r22 = polar_rotation(
                f00, f01, f02, f10, f11, f12, f20, f21, f22
            )
            a00 = f00 - r00
            a01 = f01 - r01
            a02 = f02 - r02
            a10 = f10 - r10
            a11 = f11 - r11
            a12 = f12 - r12
            a20 = f20 - r20
            a21 = f21 - r21
            a22 = f22 - r22
            two_mu = 2.0 * mu
            iso = lam * j * (j - 1.0)
            st00 = two_mu * (a00 * f00 + a01 * f01 + a02 * f02) + iso
            st01 = two_mu * (a00 * f10 + a01 * f11 + a02 * f12)
            st02 = two_mu * (a00 * f20 + a01 * f21 + a02 * f22)
            st10 = two_mu * (a10 * f00 + a11 * f01 + a12 * f02)
            st11 = two_mu * (a10 * f10 + a11 * f11 + a12 * f12) + iso
            st12 = two_mu * (a10 * f20 + a11 * f21 + a12 * f22)
            st20 = two_mu * (a20 * f00 + a21 * f01 + a22 * f02)
            st21 = two_mu * (a20 * f10 + a21 * f11 + a22 * f12)
            st22 = two_mu * (a20 * f20 + a21 * f21 + a22 * f22) + iso

        m_p = mass[p]
        coeff = stress_coeff * vol[p]
        a00 = coeff * st00 + m_p * c_mat[p, 0, 0]
        a01 = coeff * st01 + m_p * c_mat[p, 0, 1]
        a02 = coeff * st02 + m_p * c_mat[p, 0, 2]
        a10 = coeff * st10 + m_p * c_mat[p, 1, 0]
        a11 = coeff * st11 + m_p * c_mat[p, 1, 1]
        a12 = coeff * st12 + m_p * c_mat[p, 1, 2]
        a20 = coeff * st20 + m_p * c_mat[p, 2, 0]
        a21 = coeff * st21 + m_p * c_mat[p, 2, 1]
        a22 = coeff * st22 + m_p * c_mat[p, 2, 2]

        px = x[p, 0] * inv_dx
        py = x[p, 1] * inv_dx
        pz = x[p, 2] * inv_dx
        bi = int(px - 0.5)
        bj = int(py - 0.5)
        bk = int(pz - 0.5)
        if bi < 0 or bj < 0 or bk < 0 or bi + 2 >= n or bj + 2 >= n or bk + 2 >= n:
            return ERR_STENCIL, p
        fx = px - bi
        fy = py - bj
        fz = pz - bk
        wx0 = 0.5 * (1.5 - fx) ** 2
        wx1 = 0.75 - (fx - 1.0) ** 2
        wx2 = 0.5 * (fx - 0.5) ** 2
        wy0 = 0.5 * (1.5 - fy) ** 2
        wy1 = 0.75 - (fy - 1.0) ** 2
        wy2 = 0.5 * (fy - 0.5) ** 2
        wz0 = 0.5 * (1.5 - fz) ** 2
        wz1 = 0.75 - (fz - 1.0) ** 2
        wz2 = 0.5 * (fz - 0.5) ** 2

        mv0 = m_p * v[p, 0]
        mv1 = m_p * v[p, 1]
        mv2 = m_p * v[p, 2]
        fric_p = m_p * mat_fric_plate[mid]
        fric_f = m_p * mat_fric_fork[mid]

        for ii in range(3):
            wi = wx0 if ii == 0 else (wx1 if ii == 1 else wx2)
            dposx = (ii - fx) * dx
            for jj in range(3):
                wij = wi * (wy0 if jj == 0 else (wy1 if jj == 1 else wy2))
                dposy = (jj - fy) * dx
                for kk in range(3):
                    w = wij * (wz0 if kk == 0 else (wz1 if kk == 1 else wz2))
                    dposz = (kk - fz) * dx
                    gi = bi + ii
                    gj = bj + jj
                    gk = bk + kk
                    gm[gi, gj, gk] += w * m_p
                    gfp[gi, gj, gk] += w * fric_p
                    gff[gi, gj, gk] += w * fric_f
                    gv[gi, gj, gk, 0] += w * (
                        mv0 + a00 * dposx + a01 * dposy + a02 * dposz
                    )
                    gv[gi, gj, gk, 1] += w * (
                        mv1 + a10 * dposx + a11 * dposy + a12 * dposz
                    )
                    gv[gi, gj, gk, 2] += w * (
                        mv2 + a20 * dposx + a21 * dposy + a22 * dposz
                    )
    return OK, -1


@njit(cache=True, nogil=True)
def grid_update(
    gm, gv, gfp, gff, dx, dt, gravity,
    tool_kind, tool_params, tool_fric, tool_rot, tool_trans, tool_vlin, tool_omega,
    n,
):
    """Momentum -> velocity, gravity, SDF Coulomb contact, sticky walls."""
    contact_threshold = 0.5 * dx
    h = 1e-4 * dx
    ntools = tool_kind.shape[0]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                m = gm[i, j, k]
                if m <= 0.0:
                    continue
                vx = gv[i, j, k, 0] / m + dt * gravity[0]
                vy = gv[i, j, k, 1] / m + dt * gravity[1]
                vz = gv[i, j, k, 2] / m + dt * gravity[2]
                xx = i * dx
                xy = j * dx
                xz = k * dx
                for t in range(ntools):
                    kind = tool_kind[t]
                    params = tool_params[t]
                    rot = tool_rot[t]
                    tr = tool_trans[t]
                    phi = tool_sdf_world(kind, params, rot, tr, xx, xy, xz)
                    if phi >= contact_threshold:
                        continue
                    # contact normal by central differences
                    nx = tool_sdf_world(kind, params, rot, tr, xx + h, xy, xz) - \
                        tool_sdf_world(kind, params, rot, tr, xx - h, xy, xz)
                    ny = tool_sdf_world(kind, params, rot, tr, xx, xy + h, xz) - \
                        tool_sdf_world(kind, params, rot, tr, xx, xy - h, xz)
                    nz = tool_sdf_world(kind, params, rot, tr, xx, xy, xz + h) - \
                        tool_sdf_world(kind, params, rot, tr, xx, xy, xz - h)
                    nlen = np.sqrt(nx * nx + ny * ny + nz * nz)
                    if nlen <= 0.0:
                        continue
                    nx /= nlen
                    ny /= nlen
                    nz /= nlen
                    tvx = tool_vlin[t, 0] + tool_omega[t, 1] * (xz - tr[2]) - tool_omega[t, 2] * (xy - tr[1])
                    tvy = tool_vlin[t, 1] + tool_omega[t, 2] * (xx - tr[0]) - tool_omega[t, 0] * (xz - tr[2])
                    tvz = tool_vlin[t, 2] + tool_omega[t, 0] * (xy - tr[1]) - tool_omega[t, 1] * (xx - tr[0])
                    rx = vx - tvx
                    ry = vy - tvy
                    rz = vz - tvz
                    vn = rx * nx + ry * ny + rz * nz
                    if vn >= 0.0:
                        continue
                    tx = rx - vn * nx
                    ty = ry - vn * ny
                    tz = rz - vn * nz
                    tlen = np.sqrt(tx * tx + ty * ty + tz * tz)
                    if tool_fric[t] == FRICTION_PLATE:
                        mu_c = gfp[i, j, k] / m
                    else:
                        mu_c = gff[i, j, k] / m
                    if tlen > 0.0:
                        keep = tlen + mu_c * vn
                        if keep < 0.0:
                            keep = 0.0
                        scale = keep / tlen
                        rx = tx * scale
                        ry = ty * scale
                        rz = tz * scale
                    else:
                        rx = 0.0
                        ry = 0.0
                        rz = 0.0
                    vx = rx + tvx
                    vy = ry + tvy
                    vz = rz + tvz
                if i < 2 or i >= n - 2 or j < 2 or j >= n - 2 or k < 2 or k >= n - 2:
                    vx = 0.0
                    vy = 0.0
                    vz = 0.0
                gv[i, j, k, 0] = vx
                gv[i, j, k, 1] = vy
                gv[i, j, k, 2] = vz
    return OK


@njit(cache=True, nogil=True)
def g2p(
    x, v, c_mat, f_mat, jp, matid,
    mat_class, mat_mu, mat_yield,
    gv, dx, dt, n,
):
    """Gather grid velocities, advect, update F, apply plasticity.

    Returns (status, particle, max_speed).
    """
    inv_dx = 1.0 / dx
    coef = 4.0 * inv_dx * inv_dx
    max_sq = 0.0
    for p in range(x.shape[0]):
        px = x[p, 0] * inv_dx
        py = x[p, 1] * inv_dx
        pz = x[p, 2] * inv_dx
        bi = int(px - 0.5)
        bj = int(py - 0.5)
        bk = int(pz - 0.5)
        if bi < 0 or bj < 0 or bk < 0 or bi + 2 >= n or bj + 2 >= n or bk + 2 >= n:
            return ERR_STENCIL, p, 0.0
        fx = px - bi
        fy = py - bj
        fz = pz - bk
        wx0 = 0.5 * (1.5 - fx) ** 2
        wx1 = 0.75 - (fx - 1.0) ** 2
        wx2 = 0.5 * (fx - 0.5) ** 2
        wy0 = 0.5 * (1.5 - fy) ** 2
        wy1 = 0.75 - (fy - 1.0) ** 2
        wy2 = 0.5 * (fy - 0.5) ** 2
        wz0 = 0.5 * (1.5 - fz) ** 2
        wz1 = 0.75 - (fz - 1.0) ** 2
        wz2 = 0.5 * (fz - 0.5) ** 2

        nv0 = 0.0
        nv1 = 0.0
        nv2 = 0.0
        nc00 = 0.0
        nc01 = 0.0
        nc02 = 0.0
        nc10 = 0.0
        nc11 = 0.0
        nc12 = 0.0
        nc20 = 0.0
        nc21 = 0.0
        nc22 = 0.0
        for ii in range(3):
            wi = wx0 if ii == 0 else (wx1 if ii == 1 else wx2)
            dposx = (ii - fx) * dx
            for jj in range(3):
                wij = wi * (wy0 if jj == 0 else (wy1 if jj == 1 else wy2))
                dposy = (jj - fy) * dx
                for kk in range(3):
                    w = wij * (wz0 if kk == 0 else (wz1 if kk == 1 else wz2))
                    dposz = (kk - fz) * dx
                    gv0 = gv[bi + ii, bj + jj, bk + kk, 0]
                    gv1 = gv[bi + ii, bj + jj, bk + kk, 1]
                    gv2 = gv[bi + ii, bj + jj, bk + kk, 2]
                    nv0 += w * gv0
                    nv1 += w * gv1
                    nv2 += w * gv2
                    cw = coef * w
                    nc00 += cw * gv0 * dposx
                    nc01 += cw * gv0 * dposy
                    nc02 += cw * gv0 * dposz
                    nc10 += cw * gv1 * dposx
                    nc11 += cw * gv1 * dposy
                    nc12 += cw * gv1 * dposz
                    nc20 += cw * gv2 * dposx
                    nc21 += cw * gv2 * dposy
                    nc22 += cw * gv2 * dposz

        v[p, 0] = nv0
        v[p, 1] = nv1
        v[p, 2] = nv2
        c_mat[p, 0, 0] = nc00
        c_mat[p, 0, 1] = nc01
        c_mat[p, 0, 2] = nc02
        c_mat[p, 1, 0] = nc10
        c_mat[p, 1, 1] = nc11
        c_mat[p, 1, 2] = nc12
        c_mat[p, 2, 0] = nc20
        c_mat[p, 2, 1] = nc21
        c_mat[p, 2, 2] = nc22
        x[p, 0] += dt * nv0
        x[p, 1] += dt * nv1
        x[p, 2] += dt * nv2
        sq = nv0 * nv0 + nv1 * nv1 + nv2 * nv2
        if sq > max_sq:
            max_sq = sq

        # F <- (I + dt C) F, then the per-class plastic treatment
        g00 = 1.0 + dt * nc00
        g01 = dt * nc01
        g02 = dt * nc02
        g10 = dt * nc10
        g11 = 1.0 + dt * nc11
        g12 = dt * nc12
        g20 = dt * nc20
        g21 = dt * nc21
        g22 = 1.0 + dt * nc22
        cls = mat_class[matid[p]]
        if cls == MODEL_PLASTIC:
            dj = (
                g00 * (g11 * g22 - g12 * g21)
                - g01 * (g10 * g22 - g12 * g20)
                + g02 * (g10 * g21 - g11 * g20)
            )
            jnew = jp[p] * dj
            if jnew <= 0.0:
                return ERR_INVERTED, p, 0.0
            jp[p] = jnew
            cbrt = jnew ** (1.0 / 3.0)
            f_mat[p, 0, 0] = cbrt
            f_mat[p, 0, 1] = 0.0
            f_mat[p, 0, 2] = 0.0
            f_mat[p, 1, 0] = 0.0
            f_mat[p, 1, 1] = cbrt
            f_mat[p, 1, 2] = 0.0
            f_mat[p, 2, 0] = 0.0
            f_mat[p, 2, 1] = 0.0
            f_mat[p, 2, 2] = cbrt
        else:
            f00 = f_mat[p, 0, 0]
            f01 = f_mat[p, 0, 1]
            f02 = f_mat[p, 0, 2]
            f10 = f_mat[p, 1, 0]
            f11 = f_mat[p, 1, 1]
            f12 = f_mat[p, 1, 2]
            f20 = f_mat[p, 2, 0]
            f21 = f_mat[p, 2, 1]
            f22 = f_mat[p, 2, 2]
            h00 = g00 * f00 + g01 * f10 + g02 * f20
            h01 = g00 * f01 + g01 * f11 + g02 * f21
            h02 = g00 * f02 + g01 * f12 + g02 * f22
            h10 = g10 * f00 + g11 * f10 + g12 * f20
            h11 = g10 * f01 + g11 * f11 + g12 * f21
            h12 = g10 * f02 + g11 * f12 + g12 * f22
            h20 = g20 * f00 + g21 * f10 + g22 * f20
            h21 = g20 * f01 + g21 * f11 + g22 * f21
            h22 = g20 * f02 + g21 * f12 + g22 * f22
            if cls == MODEL_ELASTOPLASTIC:
                mu = mat_mu[matid[p]]
                sy = mat_yield[matid[p]]
                h00, h01, h02, h10, h11, h12, h20, h21, h22, ok = vonmises_project(
                    h00, h01, h02, h10, h11, h12, h20, h21, h22, mu, sy
                )
                if not ok:
                    return ERR_INVERTED, p, 0.0
            det = (
                h00 * (h11 * h22 - h12 * h21)
                - h01 * (h10 * h22 - h12 * h20)
                + h02 * (h10 * h21 - h11 * h20)
            )
            if det <= 0.0:
                return ERR_INVERTED, p, 0.0
            f_mat[p, 0, 0] = h00
            f_mat[p, 0, 1] = h01
            f_mat[p, 0, 2] = h02
            f_mat[p, 1, 0] = h10
            f_mat[p, 1, 1] = h11
            f_mat[p, 1, 2] = h12
            f_mat[p, 2, 0] = h20
            f_mat[p, 2, 1] = h21
            f_mat[p, 2, 2] = h22
    return OK, -1, np.sqrt(max_sq)


@njit(cache=True, nogil=True)
def splat_heightfield(x, vol, item, plane_y, origin_x, origin_z, pitch, width, height, depth, label):
    """Max-splat orthographic top-down raster.

    Each particle is a sphere of radius 0.5 * vol^(1/3); a pixel records the
    highest splat top surface (relative to plane_y) and that splat's item id.
    Particles are visited in index order and ties keep the first writer.
    """
    depth[:, :] = 0.0
    label[:, :] = 0
    for p in range(x.shape[0]):
        r = 0.5 * vol[p] ** (1.0 / 3.0)
        cx = x[p, 0]
        cy = x[p, 1]
        cz = x[p, 2]
        c0 = int(np.ceil((cx - r - origin_x) / pitch))
        c1 = int(np.floor((cx + r - origin_x) / pitch))
        r0 = int(np.ceil((cz - r - origin_z) / pitch))
        r1 = int(np.floor((cz + r - origin_z) / pitch))
        if c0 < 0:
            c0 = 0
        if r0 < 0:
            r0 = 0
        if c1 >= width:
            c1 = width - 1
        if r1 >= height:
            r1 = height - 1
        for rr in range(r0, r1 + 1):
            pz = origin_z + rr * pitch
            dz = pz - cz
            for cc in range(c0, c1 + 1):
                px = origin_x + cc * pitch
                dxp = px - cx
                d2 = dxp * dxp + dz * dz
                if d2 > r * r:
                    continue
                top = cy + np.sqrt(r * r - d2) - plane_y
                if top < 0.0:
                    top = 0.0
                if top > depth[rr, cc]:
                    depth[rr, cc] = top
                    label[rr, cc] = item[p]
    return OK


@njit(cache=True, nogil=True)
def _uf_find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True, nogil=True)
def connected_labels(pos, radius):
    """Union-find over particle pairs within ``radius`` (hashed grid bins).

    Returns labels ordered by each component's lowest particle index.
    """
    npts = pos.shape[0]
    parent = np.arange(npts)
    if npts == 0:
        return parent
    inv = 1.0 / radius
    keys = np.empty(npts, dtype=np.int64)
    for p in range(npts):
        ix = np.int64(np.floor(pos[p, 0] * inv)) + 1048576
        iy = np.int64(np.floor(pos[p, 1] * inv)) + 1048576
        iz = np.int64(np.floor(pos[p, 2] * inv)) + 1048576
        keys[p] = (ix << 42) | (iy << 21) | iz
    order = np.argsort(keys, kind="mergesort")
    sorted_keys = keys[order]
    r2 = radius * radius
    for p in range(npts):
        ix = np.int64(np.floor(pos[p, 0] * inv)) + 1048576
        iy = np.int64(np.floor(pos[p, 1] * inv)) + 1048576
        iz = np.int64(np.floor(pos[p, 2] * inv)) + 1048576
        for di in range(-1, 2):
            for dj in range(-1, 2):
                for dk in range(-1, 2):
                    key = ((ix + di) << 42) | ((iy + dj) << 21) | (iz + dk)
                    lo = np.searchsorted(sorted_keys, key)
                    hi = np.searchsorted(sorted_keys, key + 1)
                    for s in range(lo, hi):
                        q = order[s]
                        if q <= p:
                            continue
                        ddx = pos[p, 0] - pos[q, 0]
                        ddy = pos[p, 1] - pos[q, 1]
                        ddz = pos[p, 2] - pos[q, 2]
                        if ddx * ddx + ddy * ddy + ddz * ddz <= r2:
                            ra = _uf_find(parent, p)
                            rb = _uf_find(parent, q)
                            if ra < rb:
                                parent[rb] = ra
                            elif rb < ra:
                                parent[ra] = rb
    labels = np.empty(npts, dtype=np.int64)
    next_label = 0
    remap = np.full(npts, -1, dtype=np.int64)
    for p in range(npts):
        root = _uf_find(parent, p)
        if remap[root] < 0:
            remap[root] = next_label
            next_label += 1
        labels[p] = remap[root]
    return labels
