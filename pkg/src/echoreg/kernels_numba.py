"""Numba-compiled kernels: the hot per-particle resample + NCC loops.

Importing this module requires numba; echoreg.backend falls back to
kernels_numpy when the import fails or ECHOREG_BACKEND=numpy is set.

Determinism contract: the particle loop is parallel, but each particle's
accumulation runs serially in a fixed voxel order, so results are bitwise
identical for any thread count.  No fastmath anywhere.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange

FILL_VALUE = 0.0
VARIANCE_EPS = 1e-12

NAME = "numba"


@njit(cache=True)
def _sample_one(src, u, v, w, sx, sy, sz):
    """Trilinear blend at an in-bounds continuous index (u, v, w).

    Tolerates epsilon-out-of-range inputs (from interval rounding) by
    clamping the cell, never reading outside the array.
    """
    i0 = int(math.floor(u))
    if i0 < 0:
        i0 = 0
    i1 = i0 + 1
    if i1 > sx - 1:
        i1 = sx - 1
        i0 = i1 - 1 if i1 > 0 else 0
    fu = u - i0
    j0 = int(math.floor(v))
    if j0 < 0:
        j0 = 0
    j1 = j0 + 1
    if j1 > sy - 1:
        j1 = sy - 1
        j0 = j1 - 1 if j1 > 0 else 0
    fv = v - j0
    k0 = int(math.floor(w))
    if k0 < 0:
        k0 = 0
    k1 = k0 + 1
    if k1 > sz - 1:
        k1 = sz - 1
        k0 = k1 - 1 if k1 > 0 else 0
    fw = w - k0
    c00 = src[i0, j0, k0] * (1.0 - fu) + src[i1, j0, k0] * fu
    c10 = src[i0, j1, k0] * (1.0 - fu) + src[i1, j1, k0] * fu
    c01 = src[i0, j0, k1] * (1.0 - fu) + src[i1, j0, k1] * fu
    c11 = src[i0, j1, k1] * (1.0 - fu) + src[i1, j1, k1] * fu
    c0 = c00 * (1.0 - fv) + c10 * fv
    c1 = c01 * (1.0 - fv) + c11 * fv
    return c0 * (1.0 - fw) + c1 * fw


@njit(parallel=True, cache=True)
def _resample_kernel(src, a, b, out):
    nx, ny, nz = out.shape
    sx, sy, sz = src.shape
    for i in prange(nx):
        for j in range(ny):
            u0 = a[0, 0] * i + a[0, 1] * j + b[0]
            v0 = a[1, 0] * i + a[1, 1] * j + b[1]
            w0 = a[2, 0] * i + a[2, 1] * j + b[2]
            for k in range(nz):
                u = u0 + a[0, 2] * k
                v = v0 + a[1, 2] * k
                w = w0 + a[2, 2] * k
                if (
                    0.0 <= u <= sx - 1
                    and 0.0 <= v <= sy - 1
                    and 0.0 <= w <= sz - 1
                ):
                    out[i, j, k] = _sample_one(src, u, v, w, sx, sy, sz)
                else:
                    out[i, j, k] = FILL_VALUE


@njit(cache=True)
def _k_interval(c0, slope, limit, k_lo, k_hi):
    """Shrink [k_lo, k_hi) to where 0 <= c0 + slope*k <= limit holds.

    Floats are compared against the current bounds before any int
    conversion, so near-zero slopes cannot overflow.
    """
    if slope == 0.0:
        if 0.0 <= c0 <= limit:
            return k_lo, k_hi
        return 0, 0
    if slope > 0.0:
        lo = (0.0 - c0) / slope
        hi = (limit - c0) / slope
    else:
        lo = (limit - c0) / slope
        hi = (0.0 - c0) / slope
    if lo > k_lo:
        if lo > k_hi:
            return 0, 0
        k_lo = int(math.ceil(lo))
    if hi < k_hi - 1:
        if hi < k_lo:
            return 0, 0
        k_hi = int(math.floor(hi)) + 1
    return k_lo, k_hi


@njit(parallel=True, cache=True)
def _ncc_kernel(tgt, src, a_batch, b_batch, overlap_only, ncc, degenerate):
    p_total = a_batch.shape[0]
    nx, ny, nz = tgt.shape
    sx, sy, sz = src.shape
    # With fill = 0 only in-bounds voxels contribute to the source sums, so
    # the full-region target sums can be taken once up front.
    tot_t = 0.0
    tot_tt = 0.0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                t = tgt[i, j, k]
                tot_t += t
                tot_tt += t * t
    for p in prange(p_total):
        a00 = a_batch[p, 0, 0]
        a01 = a_batch[p, 0, 1]
        a02 = a_batch[p, 0, 2]
        a10 = a_batch[p, 1, 0]
        a11 = a_batch[p, 1, 1]
        a12 = a_batch[p, 1, 2]
        a20 = a_batch[p, 2, 0]
        a21 = a_batch[p, 2, 1]
        a22 = a_batch[p, 2, 2]
        b0 = b_batch[p, 0]
        b1 = b_batch[p, 1]
        b2 = b_batch[p, 2]
        s_t = 0.0
        s_s = 0.0
        s_tt = 0.0
        s_ss = 0.0
        s_ts = 0.0
        n = 0
        for i in range(nx):
            for j in range(ny):
                u0 = a00 * i + a01 * j + b0
                v0 = a10 * i + a11 * j + b1
                w0 = a20 * i + a21 * j + b2
                # in-bounds voxels of this row form one contiguous k run
                k_lo, k_hi = _k_interval(u0, a02, sx - 1.0, 0, nz)
                k_lo, k_hi = _k_interval(v0, a12, sy - 1.0, k_lo, k_hi)
                k_lo, k_hi = _k_interval(w0, a22, sz - 1.0, k_lo, k_hi)
                for k in range(k_lo, k_hi):
                    u = u0 + a02 * k
                    v = v0 + a12 * k
                    w = w0 + a22 * k
                    val = _sample_one(src, u, v, w, sx, sy, sz)
                    t = tgt[i, j, k]
                    s_s += val
                    s_ss += val * val
                    s_ts += t * val
                    if overlap_only:
                        s_t += t
                        s_tt += t * t
                        n += 1
        if not overlap_only:
            s_t = tot_t
            s_tt = tot_tt
            n = nx * ny * nz
        if n == 0:
            ncc[p] = 0.0
            degenerate[p] = True
            continue
        nf = float(n)
        sst = s_tt - s_t * s_t / nf
        sss = s_ss - s_s * s_s / nf
        if sst / nf < VARIANCE_EPS or sss / nf < VARIANCE_EPS:
            ncc[p] = 0.0
            degenerate[p] = True
        else:
            sts = s_ts - s_t * s_s / nf
            ncc[p] = (sts * sts) / (sst * sss)
            degenerate[p] = False


def resample_trilinear(src, a, b, out_dims):
    out = np.empty(out_dims, dtype=np.float64)
    _resample_kernel(
        np.ascontiguousarray(src),
        np.ascontiguousarray(a),
        np.ascontiguousarray(b),
        out,
    )
    return out


def ncc_measure_batch(tgt, src, a_batch, b_batch, overlap_only, workers=1):
    """See kernels_numpy.ncc_measure_batch; this version fuses resampling and
    the NCC sums into one pass and parallelizes over particles."""
    p_total = a_batch.shape[0]
    ncc = np.zeros(p_total, dtype=np.float64)
    degenerate = np.zeros(p_total, dtype=np.bool_)
    prev = numba.get_num_threads()
    numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))
    try:
        _ncc_kernel(
            np.ascontiguousarray(tgt),
            np.ascontiguousarray(src),
            np.ascontiguousarray(a_batch),
            np.ascontiguousarray(b_batch),
            overlap_only,
            ncc,
            degenerate,
        )
    finally:
        numba.set_num_threads(prev)
    return ncc, degenerate


def warm_up():
    """Compile the kernels on a toy problem (cached across processes)."""
    src = np.zeros((2, 2, 2))
    src[1, 1, 1] = 1.0
    eye = np.eye(3)
    zero = np.zeros(3)
    resample_trilinear(src, eye, zero, (2, 2, 2))
    ncc_measure_batch(src, src, eye[np.newaxis], zero[np.newaxis], False, 1)
