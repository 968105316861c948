"""Rigid transform parameterization and trilinear resampling.

Conventions (fixed across the whole package):

* A rigid state is six numbers (rx, ry, rz, tx, ty, tz): rotation angles in
  radians about the volume axes and translations in millimetres.
* to_matrix builds T = Trans(c) . Rz . Ry . Rx . Trans(-c) . Trans(t), i.e.
  intrinsic yaw-pitch-roll about a rotation center c, translation applied
  first in physical space.
* Matrices map target-space physical points into source space (pull-back);
  resample(source, reference, m) therefore samples the source at m(x) for
  every reference grid point x, with 0.0 filled outside the source grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .volume import Volume3

FILL_VALUE = 0.0
ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class RigidParams:
    """6-DOF rigid transform: three Euler angles (radians), three translations (mm)."""

    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        vals = (self.rx, self.ry, self.rz, self.tx, self.ty, self.tz)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"rigid parameters must be finite, got {vals}")

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.rx, self.ry, self.rz, self.tx, self.ty, self.tz], dtype=np.float64
        )

    @staticmethod
    def from_array(a) -> "RigidParams":
        rx, ry, rz, tx, ty, tz = (float(v) for v in a)
        return RigidParams(rx, ry, rz, tx, ty, tz)

    def canonical(self) -> "RigidParams":
        """Angles wrapped into (-pi, pi]; translations unchanged."""
        return RigidParams(
            canonical_angle(self.rx),
            canonical_angle(self.ry),
            canonical_angle(self.rz),
            self.tx,
            self.ty,
            self.tz,
        )


def canonical_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    wrapped = math.fmod(a, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rotation_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    """3x3 rotation Rz(rz) @ Ry(ry) @ Rx(rx)."""
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    rmx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    rmy = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rmz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return rmz @ rmy @ rmx


def to_matrix(p: RigidParams, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Homogeneous 4x4 matrix for p rotating about the given physical center.

    Equals the product Trans(c) . Rz . Ry . Rx . Trans(-c) . Trans(t),
    collapsed to [R | R @ (t - c) + c].
    """
    c = np.asarray(center, dtype=np.float64)
    t = np.array([p.tx, p.ty, p.tz], dtype=np.float64)
    r = rotation_xyz(p.rx, p.ry, p.rz)
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = r @ (t - c) + c
    return m


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b of two homogeneous transforms."""
    return np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)


def inverse(m: np.ndarray) -> np.ndarray:
    """Closed-form rigid inverse (R^T, -R^T t); never a general matrix solve."""
    m = np.asarray(m, dtype=np.float64)
    r_t = m[:3, :3].T
    out = np.eye(4)
    out[:3, :3] = r_t
    out[:3, 3] = -r_t @ m[:3, 3]
    return out


def apply_transform(m: np.ndarray, point) -> np.ndarray:
    """Apply a homogeneous transform to one physical point."""
    p = np.asarray(point, dtype=np.float64)
    return m[:3, :3] @ p + m[:3, 3]


def is_homogeneous(m: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    """Check the rigid-matrix invariants: orthonormal R, det 1, (0,0,0,1) row."""
    m = np.asarray(m)
    if m.shape != (4, 4):
        return False
    r = m[:3, :3]
    if np.abs(r.T @ r - np.eye(3)).max() > tol:
        return False
    if abs(np.linalg.det(r) - 1.0) > tol:
        return False
    return bool(np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]))


def index_affine(m: np.ndarray, source: Volume3, reference: Volume3):
    """Reduce (grid -> physical -> m -> physical -> grid) to one index affine.

    Returns (A, b) such that the continuous source index for reference voxel
    (i, j, k) is A @ (i, j, k) + b.  Computed so that the identity transform
    on identical grids yields exactly A = I, b = 0.
    """
    m = np.asarray(m, dtype=np.float64)
    r = m[:3, :3]
    t = m[:3, 3]
    st = np.asarray(reference.spacing, dtype=np.float64)
    ss = np.asarray(source.spacing, dtype=np.float64)
    ot = np.asarray(reference.origin, dtype=np.float64)
    os_ = np.asarray(source.origin, dtype=np.float64)
    a = (r * st[np.newaxis, :]) / ss[:, np.newaxis]
    b = (r @ ot + t - os_) / ss
    return a, b


def trilinear_sample(v: Volume3, point) -> float:
    """Trilinear blend of the 8 voxels around a physical point.

    Points outside the index-space bounding box return FILL_VALUE.
    """
    p = np.asarray(point, dtype=np.float64)
    u = (p - np.asarray(v.origin)) / np.asarray(v.spacing)
    nx, ny, nz = v.dims
    if not (0.0 <= u[0] <= nx - 1 and 0.0 <= u[1] <= ny - 1 and 0.0 <= u[2] <= nz - 1):
        return FILL_VALUE
    i0, i1, fu = _edge_cell(u[0], nx)
    j0, j1, fv = _edge_cell(u[1], ny)
    k0, k1, fw = _edge_cell(u[2], nz)
    d = v.data
    c00 = d[i0, j0, k0] * (1.0 - fu) + d[i1, j0, k0] * fu
    c10 = d[i0, j1, k0] * (1.0 - fu) + d[i1, j1, k0] * fu
    c01 = d[i0, j0, k1] * (1.0 - fu) + d[i1, j0, k1] * fu
    c11 = d[i0, j1, k1] * (1.0 - fu) + d[i1, j1, k1] * fu
    c0 = c00 * (1.0 - fv) + c10 * fv
    c1 = c01 * (1.0 - fv) + c11 * fv
    return float(c0 * (1.0 - fw) + c1 * fw)


def _edge_cell(u: float, n: int):
    """Cell index pair and fraction for an in-bounds continuous index."""
    i0 = int(math.floor(u))
    i1 = i0 + 1
    if i1 > n - 1:
        i1 = n - 1
        i0 = i1 - 1 if i1 > 0 else 0
    return i0, i1, u - i0


def resample(source: Volume3, reference: Volume3, m: np.ndarray) -> Volume3:
    """Pull the source volume onto the reference grid under transform m.

    Output voxel at physical point x holds the trilinear sample of the source
    at m(x); out-of-source points take FILL_VALUE.
    """
    from . import backend

    a, b = index_affine(m, source, reference)
    out = backend.get_backend().resample_trilinear(
        source.data, a, b, reference.dims
    )
    return Volume3(out, reference.spacing, reference.origin)
