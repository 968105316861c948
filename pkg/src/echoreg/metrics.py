"""Similarity and overlap measures.

ncc returns the squared normalized cross-correlation,

    (sum (T_i - mean T)(S_i - mean S))^2
    -----------------------------------  in [0, 1],
    sum (T_i - mean T)^2  sum (S_i - mean S)^2

which is 1 for a perfect linear intensity relationship and invariant to
affine rescaling of either argument.  dice is the overlap score
2|A n B| / (|A| + |B|) on binary masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import DegenerateInput, DimMismatch
from .volume import VARIANCE_EPS, Volume3, binarize, require_binary

_RANGE_SLACK = 1e-9


@dataclass(frozen=True)
class MetricValue:
    """A dimensionless score in [0, 1] tagged with its kind (NCC or DSC)."""

    value: float
    kind: str

    def __post_init__(self):
        v = float(self.value)
        if not (-_RANGE_SLACK <= v <= 1.0 + _RANGE_SLACK):
            raise ValueError(f"{self.kind} value {v} outside [0, 1]")
        object.__setattr__(self, "value", min(max(v, 0.0), 1.0))

    def __float__(self) -> float:
        return self.value


def _check_dims(a: Volume3, b: Volume3):
    if a.dims != b.dims:
        raise DimMismatch(f"volume dims differ: {a.dims} vs {b.dims}")


def ncc(t: Volume3, s: Volume3) -> MetricValue:
    """Squared NCC between two same-grid volumes.

    Raises DegenerateInput (never returns NaN) when either side has
    population variance below VARIANCE_EPS.
    """
    _check_dims(t, s)
    td = t.data.ravel()
    sd = s.data.ravel()
    n = td.size
    dt = td - td.mean()
    ds = sd - sd.mean()
    sst = float(dt @ dt)
    sss = float(ds @ ds)
    if sst / n < VARIANCE_EPS:
        raise DegenerateInput("target volume is constant; NCC undefined")
    if sss / n < VARIANCE_EPS:
        raise DegenerateInput("source volume is constant; NCC undefined")
    sts = float(dt @ ds)
    return MetricValue((sts * sts) / (sst * sss), "NCC")


def dice(a: Volume3, b: Volume3) -> MetricValue:
    """Dice overlap of two binary masks.

    Both masks empty scores 1.0 (nothing to misalign); exactly one empty
    scores 0.0.
    """
    _check_dims(a, b)
    require_binary(a, "first mask")
    require_binary(b, "second mask")
    size_a = float(a.data.sum())
    size_b = float(b.data.sum())
    if size_a == 0.0 and size_b == 0.0:
        return MetricValue(1.0, "DSC")
    inter = float((a.data * b.data).sum())
    return MetricValue(2.0 * inter / (size_a + size_b), "DSC")


def dice_under_transform(a: Volume3, b: Volume3, m: np.ndarray) -> MetricValue:
    """Dice of mask a pulled onto b's grid under m (trilinear, 0.5 cut)."""
    _check_dims(a, b)
    require_binary(a, "first mask")
    moved = binarize(geometry.resample(a, b, m), 0.5)
    return dice(moved, b)
