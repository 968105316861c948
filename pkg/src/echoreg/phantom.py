"""Synthetic ground-truth cases: a contracting ellipsoidal shell with
log-normal speckle, plus source/target pairs under a known rigid transform.

The shell mimics a left ventricle: bright tissue between two ellipsoids,
dark blood inside the inner one, and a binary cavity mask per frame.  Frame
k scales the shell by 1 - amplitude * sin^2(pi k / frames), so frame 0 is
end-diastole (largest cavity) and mid-cycle is systole.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import geometry, io
from .errors import BadConfig, CorruptHeader
from .geometry import RigidParams, inverse, to_matrix
from .metrics import dice
from .volume import Sequence4, Volume3, binarize

INTENSITY_BACKGROUND = 0.2
INTENSITY_TISSUE = 1.0
INTENSITY_BLOOD = 0.1


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    outer_semiaxes: tuple[float, float, float] = (22.0, 18.0, 26.0)   # mm
    inner_semiaxes: tuple[float, float, float] = (14.0, 11.0, 17.0)   # mm
    center: tuple[float, float, float] | None = None   # defaults to grid center
    speckle_sigma: float = 0.3
    amplitude: float = 0.25
    frames: int = 5
    frame_rate: float = 16.0
    seed: int = 0

    def validate(self):
        if any(d < 1 for d in self.dims) or any(s <= 0 for s in self.spacing):
            raise BadConfig(f"bad grid: dims {self.dims}, spacing {self.spacing}")
        if not all(
            0 < i < o for i, o in zip(self.inner_semiaxes, self.outer_semiaxes)
        ):
            raise BadConfig(
                f"inner semi-axes {self.inner_semiaxes} must sit strictly "
                f"inside outer {self.outer_semiaxes}"
            )
        if not (0.0 <= self.amplitude < 1.0):
            raise BadConfig(f"amplitude must be in [0, 1), got {self.amplitude}")
        if self.frames < 1:
            raise BadConfig(f"frames must be >= 1, got {self.frames}")
        if self.speckle_sigma < 0:
            raise BadConfig(f"speckle sigma must be >= 0, got {self.speckle_sigma}")


def make_phantom(spec: PhantomSpec) -> tuple[Sequence4, list[Volume3]]:
    """Generate the speckled shell sequence and its per-frame cavity masks.

    The speckle field is drawn once and shared by all frames (texture moves
    with the tissue, so amplitude 0 gives identical frames).  Deterministic
    given spec.seed.
    """
    spec.validate()
    nx, ny, nz = spec.dims
    sx, sy, sz = spec.spacing
    probe = Volume3(np.zeros(spec.dims), spec.spacing)
    center = spec.center if spec.center is not None else probe.physical_center()
    xs = (np.arange(nx) * sx - center[0])[:, None, None]
    ys = (np.arange(ny) * sy - center[1])[None, :, None]
    zs = (np.arange(nz) * sz - center[2])[None, None, :]
    gen = np.random.Generator(np.random.Philox(key=spec.seed))
    speckle = np.exp(spec.speckle_sigma * gen.standard_normal(spec.dims))
    frames: list[Volume3] = []
    masks: list[Volume3] = []
    for k in range(spec.frames):
        scale = 1.0 - spec.amplitude * math.sin(math.pi * k / spec.frames) ** 2
        r_out = _ellipsoid_radius(xs, ys, zs, spec.outer_semiaxes, scale)
        r_in = _ellipsoid_radius(xs, ys, zs, spec.inner_semiaxes, scale)
        base = np.full(spec.dims, INTENSITY_BACKGROUND)
        base[r_out <= 1.0] = INTENSITY_TISSUE
        cavity = r_in <= 1.0
        base[cavity] = INTENSITY_BLOOD
        frames.append(Volume3(base * speckle, spec.spacing))
        masks.append(Volume3(cavity.astype(np.float64), spec.spacing))
    seq = Sequence4(frames, frame_rate=spec.frame_rate, ed_index=0)
    return seq, masks


def _ellipsoid_radius(xs, ys, zs, semiaxes, scale):
    ax, ay, az = (a * scale for a in semiaxes)
    return (xs / ax) ** 2 + (ys / ay) ** 2 + (zs / az) ** 2


@dataclass
class RegistrationCase:
    """A target/source pair with known ground truth.

    truth is the target-to-source mapping the registration should recover;
    the source was produced by pulling every target frame through the
    inverse of truth, then optionally cropping a +x face slab to shrink the
    initial overlap.
    """

    target: Sequence4
    source: Sequence4
    target_masks: list[Volume3]
    source_masks: list[Volume3]
    truth: RigidParams
    overlap_crop: float = 0.0
    seed: int = 0
    initial_dsc: float | None = None
    case_id: str = "phantom"


def make_pair(
    seq: Sequence4,
    masks: list[Volume3],
    truth: RigidParams,
    overlap_crop: float = 0.0,
    seed: int = 0,
    case_id: str = "phantom",
) -> RegistrationCase:
    """Build a registration case whose ground truth is exactly `truth`."""
    if not (0.0 <= overlap_crop < 1.0):
        raise BadConfig(f"overlap_crop must be in [0, 1), got {overlap_crop}")
    if len(masks) != len(seq):
        raise BadConfig(
            f"{len(masks)} masks for {len(seq)} frames; need one per frame"
        )
    grid = seq.grid
    m_inv = inverse(to_matrix(truth, grid.physical_center()))
    nx = grid.dims[0]
    slab_start = nx - int(round(overlap_crop * nx))
    src_frames = []
    src_masks = []
    for frame, mask in zip(seq.frames, masks):
        moved = geometry.resample(frame, frame, m_inv)
        moved_mask = binarize(geometry.resample(mask, mask, m_inv), 0.5)
        if slab_start < nx:
            cut = moved.data.copy()
            cut[slab_start:, :, :] = geometry.FILL_VALUE
            moved = moved.with_data(cut)
            cut_mask = moved_mask.data.copy()
            cut_mask[slab_start:, :, :] = 0.0
            moved_mask = moved_mask.with_data(cut_mask)
        src_frames.append(moved)
        src_masks.append(moved_mask)
    source = Sequence4(src_frames, frame_rate=seq.frame_rate, ed_index=seq.ed_index)
    ed = seq.ed_index
    initial = float(dice(masks[ed], src_masks[ed]))
    return RegistrationCase(
        target=seq,
        source=source,
        target_masks=list(masks),
        source_masks=src_masks,
        truth=truth,
        overlap_crop=overlap_crop,
        seed=seed,
        initial_dsc=initial,
        case_id=case_id,
    )


def save_case(case: RegistrationCase, out_dir: str):
    """Write a case directory: four 4D NIfTI files plus case.json."""
    os.makedirs(out_dir, exist_ok=True)
    seq = case.target
    io.write_volume(seq, os.path.join(out_dir, "target.nii"))
    io.write_volume(case.source, os.path.join(out_dir, "source.nii"))
    io.write_volume(
        _mask_sequence(case.target_masks, seq),
        os.path.join(out_dir, "target_masks.nii"),
        dtype="uint8",
    )
    io.write_volume(
        _mask_sequence(case.source_masks, seq),
        os.path.join(out_dir, "source_masks.nii"),
        dtype="uint8",
    )
    meta = {
        "schema": 1,
        "case_id": case.case_id,
        "truth_deg_mm": {
            "rx_deg": math.degrees(case.truth.rx),
            "ry_deg": math.degrees(case.truth.ry),
            "rz_deg": math.degrees(case.truth.rz),
            "tx_mm": case.truth.tx,
            "ty_mm": case.truth.ty,
            "tz_mm": case.truth.tz,
        },
        "overlap_crop": case.overlap_crop,
        "seed": case.seed,
        "ed_index": seq.ed_index,
        "frame_rate": seq.frame_rate,
        "initial_dsc": case.initial_dsc,
    }
    with open(os.path.join(out_dir, "case.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def _mask_sequence(masks: list[Volume3], like: Sequence4) -> Sequence4:
    return Sequence4(masks, frame_rate=like.frame_rate, ed_index=like.ed_index)


def load_case(case_dir: str) -> RegistrationCase:
    meta_path = os.path.join(case_dir, "case.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise CorruptHeader(f"cannot read case manifest {meta_path}: {exc}") from exc
    tr = meta["truth_deg_mm"]
    truth = RigidParams(
        math.radians(tr["rx_deg"]),
        math.radians(tr["ry_deg"]),
        math.radians(tr["rz_deg"]),
        tr["tx_mm"],
        tr["ty_mm"],
        tr["tz_mm"],
    )
    ed = int(meta.get("ed_index", 0))
    rate = float(meta.get("frame_rate", 1.0))

    def load_seq(name):
        seq = io.read_volume(os.path.join(case_dir, name))
        if isinstance(seq, Volume3):
            seq = Sequence4([seq], frame_rate=rate)
        return Sequence4(seq.frames, frame_rate=rate, ed_index=ed)

    target = load_seq("target.nii")
    source = load_seq("source.nii")
    target_masks = load_seq("target_masks.nii").frames
    source_masks = load_seq("source_masks.nii").frames
    return RegistrationCase(
        target=target,
        source=source,
        target_masks=target_masks,
        source_masks=source_masks,
        truth=truth,
        overlap_crop=float(meta.get("overlap_crop", 0.0)),
        seed=int(meta.get("seed", 0)),
        initial_dsc=meta.get("initial_dsc"),
        case_id=str(meta.get("case_id", os.path.basename(case_dir) or "case")),
    )
