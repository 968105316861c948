"""Independent scalar-loop reference implementations.

Everything here is deliberately written the slow, obvious way (plain python
loops, literal formulas) and shares no code with the package internals; the
tests compare the fast paths against these.
"""

import math

import numpy as np


def ncc_scalar(t_vals, s_vals):
    """Squared normalized cross-correlation by direct summation."""
    n = len(t_vals)
    mt = sum(t_vals) / n
    ms = sum(s_vals) / n
    num = 0.0
    dt2 = 0.0
    ds2 = 0.0
    for a, b in zip(t_vals, s_vals):
        num += (a - mt) * (b - ms)
        dt2 += (a - mt) ** 2
        ds2 += (b - ms) ** 2
    return (num * num) / (dt2 * ds2)


def dice_scalar(a_vals, b_vals):
    """Dice overlap by explicit voxel counting."""
    inter = 0
    na = 0
    nb = 0
    for a, b in zip(a_vals, b_vals):
        if a == 1:
            na += 1
        if b == 1:
            nb += 1
        if a == 1 and b == 1:
            inter += 1
    if na == 0 and nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def trilinear_8term(corners, fu, fv, fw):
    """Explicit eight-term trilinear blend; corners indexed [i][j][k]."""
    total = 0.0
    for i in (0, 1):
        for j in (0, 1):
            for k in (0, 1):
                weight = (
                    (fu if i else 1.0 - fu)
                    * (fv if j else 1.0 - fv)
                    * (fw if k else 1.0 - fw)
                )
                total += weight * corners[i][j][k]
    return total


def _trans(v):
    m = np.eye(4)
    m[:3, 3] = v
    return m


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    m = np.eye(4)
    m[1, 1], m[1, 2], m[2, 1], m[2, 2] = c, -s, s, c
    return m


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    m = np.eye(4)
    m[0, 0], m[0, 2], m[2, 0], m[2, 2] = c, s, -s, c
    return m


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    m = np.eye(4)
    m[0, 0], m[0, 1], m[1, 0], m[1, 1] = c, -s, s, c
    return m


def five_factor_matrix(rx, ry, rz, tx, ty, tz, center):
    """The rigid matrix as the literal product of its five factors."""
    c = np.asarray(center, dtype=float)
    return (
        _trans(c)
        @ _rot_z(rz)
        @ _rot_y(ry)
        @ _rot_x(rx)
        @ _trans(-c)
        @ _trans((tx, ty, tz))
    )


def sample_scalar(vol, point, fill=0.0):
    """Trilinear sample of a Volume3 at one physical point, loops only."""
    dims = vol.dims
    u = [
        (point[a] - vol.origin[a]) / vol.spacing[a]
        for a in range(3)
    ]
    for a in range(3):
        if not (0.0 <= u[a] <= dims[a] - 1):
            return fill
    idx0 = []
    frac = []
    for a in range(3):
        i0 = int(math.floor(u[a]))
        if i0 > dims[a] - 2:
            i0 = dims[a] - 2
        if i0 < 0:
            i0 = 0
        idx0.append(i0)
        frac.append(u[a] - i0)
    i0, j0, k0 = idx0
    i1 = min(i0 + 1, dims[0] - 1)
    j1 = min(j0 + 1, dims[1] - 1)
    k1 = min(k0 + 1, dims[2] - 1)
    d = vol.data
    corners = [
        [
            [d[i0, j0, k0], d[i0, j0, k1]],
            [d[i0, j1, k0], d[i0, j1, k1]],
        ],
        [
            [d[i1, j0, k0], d[i1, j0, k1]],
            [d[i1, j1, k0], d[i1, j1, k1]],
        ],
    ]
    return trilinear_8term(corners, frac[0], frac[1], frac[2])


def resample_scalar(source, reference, m):
    """Point-by-point pull-back resampling (the slow reference)."""
    nx, ny, nz = reference.dims
    out = np.zeros((nx, ny, nz))
    r = np.asarray(m, dtype=float)[:3, :3]
    t = np.asarray(m, dtype=float)[:3, 3]
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                x = [
                    reference.origin[0] + i * reference.spacing[0],
                    reference.origin[1] + j * reference.spacing[1],
                    reference.origin[2] + k * reference.spacing[2],
                ]
                p = r @ x + t
                out[i, j, k] = sample_scalar(source, p)
    return out


def weighted_mean_scalar(weights, states):
    """Component-wise weighted average with plain loops."""
    n, dim = len(weights), len(states[0])
    out = [0.0] * dim
    for i in range(n):
        for d in range(dim):
            out[d] += weights[i] * states[i][d]
    return out
