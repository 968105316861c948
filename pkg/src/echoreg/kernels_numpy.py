"""Pure-numpy kernels: vectorized resampling and batched NCC measurement.

This is the fallback backend (and the reference the numba kernels are tested
against).  Per-voxel math matches kernels_numba up to floating-point
reassociation; each particle's result is independent of worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

FILL_VALUE = 0.0
VARIANCE_EPS = 1e-12

NAME = "numpy"


def _continuous_indices(a, b, out_dims):
    nx, ny, nz = out_dims
    ii = np.arange(nx, dtype=np.float64)[:, None, None]
    jj = np.arange(ny, dtype=np.float64)[None, :, None]
    kk = np.arange(nz, dtype=np.float64)[None, None, :]
    u = a[0, 0] * ii + a[0, 1] * jj + a[0, 2] * kk + b[0]
    v = a[1, 0] * ii + a[1, 1] * jj + a[1, 2] * kk + b[1]
    w = a[2, 0] * ii + a[2, 1] * jj + a[2, 2] * kk + b[2]
    return u, v, w


def _cell(uc, n):
    i0 = np.floor(uc).astype(np.int64)
    np.minimum(i0, n - 2, out=i0)
    np.maximum(i0, 0, out=i0)
    fu = uc - i0
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, fu


def sample_with_mask(src, a, b, out_dims):
    """Trilinear samples on the output grid plus the in-bounds mask."""
    sx, sy, sz = src.shape
    u, v, w = _continuous_indices(a, b, out_dims)
    inb = (
        (u >= 0.0) & (u <= sx - 1)
        & (v >= 0.0) & (v <= sy - 1)
        & (w >= 0.0) & (w <= sz - 1)
    )
    uc = np.where(inb, u, 0.0)
    vc = np.where(inb, v, 0.0)
    wc = np.where(inb, w, 0.0)
    i0, i1, fu = _cell(uc, sx)
    j0, j1, fv = _cell(vc, sy)
    k0, k1, fw = _cell(wc, sz)
    c00 = src[i0, j0, k0] * (1.0 - fu) + src[i1, j0, k0] * fu
    c10 = src[i0, j1, k0] * (1.0 - fu) + src[i1, j1, k0] * fu
    c01 = src[i0, j0, k1] * (1.0 - fu) + src[i1, j0, k1] * fu
    c11 = src[i0, j1, k1] * (1.0 - fu) + src[i1, j1, k1] * fu
    c0 = c00 * (1.0 - fv) + c10 * fv
    c1 = c01 * (1.0 - fv) + c11 * fv
    val = c0 * (1.0 - fw) + c1 * fw
    return np.where(inb, val, FILL_VALUE), inb


def resample_trilinear(src, a, b, out_dims):
    val, _ = sample_with_mask(src, a, b, out_dims)
    return val


def _ncc_one(tgt, src, a, b, overlap_only):
    val, inb = sample_with_mask(src, a, b, tgt.shape)
    if overlap_only:
        n = int(inb.sum())
        if n == 0:
            return 0.0, True
        t = tgt[inb]
        s = val[inb]
    else:
        n = tgt.size
        t = tgt.ravel()
        s = val.ravel()
    dt = t - t.mean()
    ds = s - s.mean()
    sst = float(dt @ dt)
    sss = float(ds @ ds)
    if sst / n < VARIANCE_EPS or sss / n < VARIANCE_EPS:
        return 0.0, True
    sts = float(dt @ ds)
    return (sts * sts) / (sst * sss), False


def ncc_measure_batch(tgt, src, a_batch, b_batch, overlap_only, workers=1):
    """Squared NCC between the target and the source pulled through each
    transform; degenerate (empty or constant overlap) evaluations score 0.

    Returns (ncc, degenerate) arrays of length P.  Each evaluation is
    independent, so any worker count gives identical results.
    """
    p_total = a_batch.shape[0]
    ncc = np.zeros(p_total, dtype=np.float64)
    degenerate = np.zeros(p_total, dtype=bool)

    def run(p):
        ncc[p], degenerate[p] = _ncc_one(
            tgt, src, a_batch[p], b_batch[p], overlap_only
        )

    if workers <= 1 or p_total <= 1:
        for p in range(p_total):
            run(p)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(p_total)))
    return ncc, degenerate
