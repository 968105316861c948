"""In-memory 3D/4D volume containers and intensity operations.

A Volume3 is an axis-aligned scalar grid: voxel (i, j, k) sits at physical
point origin + (i*sx, j*sy, k*sz), all lengths in millimetres.  Binary masks
are ordinary Volume3 objects whose voxels are exactly 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstantVolume, DimMismatch

# Population std below this is treated as constant (normalization undefined).
VARIANCE_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Volume3:
    """A 3D scalar grid with physical spacing and origin.

    data is held as float64 with shape (nx, ny, nz); serialization modules
    handle the x-fastest on-disk layout.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("volume data contains non-finite values")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or len(origin) != 3:
            raise ValueError("spacing and origin must have three components")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        if not all(np.isfinite(spacing)) or not all(np.isfinite(origin)):
            raise ValueError("spacing and origin must be finite")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_voxels(self) -> int:
        return self.data.size

    def physical_center(self) -> tuple[float, float, float]:
        """Physical coordinates of the grid's midpoint."""
        return tuple(
            o + 0.5 * (n - 1) * s
            for o, n, s in zip(self.origin, self.dims, self.spacing)
        )

    def same_grid(self, other: "Volume3") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.origin == other.origin
        )

    def with_data(self, data: np.ndarray) -> "Volume3":
        """A copy of this volume's geometry around new voxel data."""
        return Volume3(data, self.spacing, self.origin)


@dataclass(frozen=True, eq=False)
class Sequence4:
    """An ordered set of geometrically identical frames (a cardiac cycle).

    ed_index marks the end-diastolic frame used for registration.
    """

    frames: list[Volume3]
    frame_rate: float = 1.0
    ed_index: int = 0

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a sequence needs at least one frame")
        first = self.frames[0]
        for f in self.frames[1:]:
            if not first.same_grid(f):
                raise DimMismatch("sequence frames do not share a grid")
        if not (0 <= self.ed_index < len(self.frames)):
            raise ValueError(
                f"ed_index {self.ed_index} outside 0..{len(self.frames) - 1}"
            )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def ed_frame(self) -> Volume3:
        return self.frames[self.ed_index]

    @property
    def grid(self) -> Volume3:
        return self.frames[0]


def as_sequence(v: Volume3 | Sequence4, frame_rate: float = 1.0) -> Sequence4:
    """Wrap a lone volume as a single-frame sequence; pass sequences through."""
    if isinstance(v, Sequence4):
        return v
    return Sequence4([v], frame_rate=frame_rate, ed_index=0)


def normalize_zscore(v: Volume3) -> Volume3:
    """Shift and scale intensities to mean 0, population std 1.

    Raises ConstantVolume when the input std is below VARIANCE_EPS.
    """
    mean = float(v.data.mean())
    std = float(v.data.std())
    if std < VARIANCE_EPS:
        raise ConstantVolume(
            f"standard deviation {std:.3e} too small to normalize"
        )
    return v.with_data((v.data - mean) / std)


def binarize(v: Volume3, threshold: float) -> Volume3:
    """Threshold a volume into a {0, 1} mask (strictly greater than)."""
    return v.with_data((v.data > threshold).astype(np.float64))


def is_binary(v: Volume3) -> bool:
    d = v.data
    return bool(np.logical_or(d == 0.0, d == 1.0).all())


def require_binary(v: Volume3, name: str = "mask") -> None:
    if not is_binary(v):
        raise ValueError(f"{name} is not binary (voxels must be exactly 0 or 1)")
