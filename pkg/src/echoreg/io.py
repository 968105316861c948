"""Volume file I/O: minimal single-file NIfTI-1 and raw float32 + JSON sidecar.

Supported dialect, selected by file extension:

* ``.nii``  - NIfTI-1, little-endian, datatype 2 (uint8) or 16 (float32),
  no extensions, 3D or 4D.  Spacing comes from pixdim[1..3], origin from
  qoffset_{x,y,z}; qform/sform are otherwise ignored and written as 0.
  For 4D files pixdim[4] carries the frame period in seconds.
* ``.raw``  - little-endian float32 voxels, x-fastest (frame-slowest for 4D),
  next to a ``.json`` sidecar: {"dims": [nx,ny,nz], "spacing": [sx,sy,sz],
  "origin": [...], "frames": n, "frame_rate": hz, "ed_index": i} with all
  but dims/spacing optional.  Passing the ``.json`` path works too.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import (
    CorruptHeader,
    IoFailure,
    TruncatedData,
    UnsupportedFormat,
)
from .volume import Sequence4, Volume3

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"
DTYPE_UINT8 = 2
DTYPE_FLOAT32 = 16

_HDR = np.dtype(
    [
        ("sizeof_hdr", "<i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "<i4"),
        ("session_error", "<i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "<i2", (8,)),
        ("intent_p1", "<f4"),
        ("intent_p2", "<f4"),
        ("intent_p3", "<f4"),
        ("intent_code", "<i2"),
        ("datatype", "<i2"),
        ("bitpix", "<i2"),
        ("slice_start", "<i2"),
        ("pixdim", "<f4", (8,)),
        ("vox_offset", "<f4"),
        ("scl_slope", "<f4"),
        ("scl_inter", "<f4"),
        ("slice_end", "<i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "<f4"),
        ("cal_min", "<f4"),
        ("slice_duration", "<f4"),
        ("toffset", "<f4"),
        ("glmax", "<i4"),
        ("glmin", "<i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "<i2"),
        ("sform_code", "<i2"),
        ("quatern_b", "<f4"),
        ("quatern_c", "<f4"),
        ("quatern_d", "<f4"),
        ("qoffset_x", "<f4"),
        ("qoffset_y", "<f4"),
        ("qoffset_z", "<f4"),
        ("srow_x", "<f4", (4,)),
        ("srow_y", "<f4", (4,)),
        ("srow_z", "<f4", (4,)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert _HDR.itemsize == HEADER_SIZE


def read_volume(path: str) -> Volume3 | Sequence4:
    """Decode a volume file; 4D inputs come back as Sequence4 (ed_index 0)."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".nii":
        return _read_nifti(path)
    if ext in (".raw", ".json"):
        return _read_raw(path)
    raise UnsupportedFormat(
        f"unsupported extension {ext!r} for {path} (expected .nii, .raw, .json)"
    )


def write_volume(v: Volume3 | Sequence4, path: str, dtype: str = "float32"):
    """Write a volume or sequence; the extension selects the format.

    dtype applies to NIfTI output only: "float32" for images, "uint8" for
    binary masks (raw files are always float32).
    """
    ext = os.path.splitext(path)[1].lower()
    if ext == ".nii":
        _write_nifti(v, path, dtype)
    elif ext in (".raw", ".json"):
        _write_raw(v, path)
    else:
        raise UnsupportedFormat(
            f"unsupported extension {ext!r} for {path} (expected .nii, .raw, .json)"
        )


def _frames_of(v: Volume3 | Sequence4) -> list[Volume3]:
    return v.frames if isinstance(v, Sequence4) else [v]


def _stack_xfastest(frames: list[Volume3]) -> np.ndarray:
    """Voxels of all frames in on-disk order: x fastest, frame slowest."""
    return np.concatenate([f.data.ravel(order="F") for f in frames])


def _read_nifti(path: str):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(blob) < HEADER_SIZE:
        raise CorruptHeader(
            f"{path}: file is {len(blob)} bytes, shorter than the "
            f"{HEADER_SIZE}-byte header"
        )
    hdr = np.frombuffer(blob[:HEADER_SIZE], dtype=_HDR)[0]
    magic = blob[344:348]
    if magic != MAGIC:
        raise UnsupportedFormat(
            f"{path}: magic at byte offset 344 is {magic!r}, expected {MAGIC!r}"
        )
    if int(hdr["sizeof_hdr"]) != HEADER_SIZE:
        raise CorruptHeader(
            f"{path}: sizeof_hdr at byte offset 0 is {int(hdr['sizeof_hdr'])}, "
            f"expected {HEADER_SIZE}"
        )
    datatype = int(hdr["datatype"])
    if datatype not in (DTYPE_UINT8, DTYPE_FLOAT32):
        raise UnsupportedFormat(
            f"{path}: datatype field is {datatype}, expected "
            f"{DTYPE_UINT8} (uint8) or {DTYPE_FLOAT32} (float32)"
        )
    ndim = int(hdr["dim"][0])
    if ndim not in (3, 4):
        raise CorruptHeader(f"{path}: dim[0] is {ndim}, expected 3 or 4")
    nx, ny, nz = (int(d) for d in hdr["dim"][1:4])
    nf = int(hdr["dim"][4]) if ndim == 4 else 1
    if min(nx, ny, nz, nf) < 1:
        raise CorruptHeader(
            f"{path}: dim[] holds nonpositive sizes ({nx}, {ny}, {nz}, {nf})"
        )
    spacing = tuple(float(s) for s in hdr["pixdim"][1:4])
    if any(s <= 0 for s in spacing):
        raise CorruptHeader(f"{path}: pixdim[1..3] must be positive, got {spacing}")
    origin = (
        float(hdr["qoffset_x"]),
        float(hdr["qoffset_y"]),
        float(hdr["qoffset_z"]),
    )
    np_dtype = np.dtype("u1") if datatype == DTYPE_UINT8 else np.dtype("<f4")
    count = nx * ny * nz * nf
    need = VOX_OFFSET + count * np_dtype.itemsize
    if len(blob) < need:
        raise TruncatedData(
            f"{path}: need {need} bytes ({count} voxels after offset "
            f"{VOX_OFFSET}) but file has {len(blob)}"
        )
    flat = np.frombuffer(blob[VOX_OFFSET:need], dtype=np_dtype)
    grid = flat.reshape((nx, ny, nz, nf), order="F")
    frames = [
        Volume3(np.ascontiguousarray(grid[:, :, :, f]), spacing, origin)
        for f in range(nf)
    ]
    if ndim == 3:
        return frames[0]
    period = float(hdr["pixdim"][4])
    rate = 1.0 / period if period > 0 else 1.0
    return Sequence4(frames, frame_rate=rate, ed_index=0)


def _write_nifti(v: Volume3 | Sequence4, path: str, dtype: str):
    frames = _frames_of(v)
    nx, ny, nz = frames[0].dims
    nf = len(frames)
    is_seq = isinstance(v, Sequence4)
    if dtype == "float32":
        code, np_dtype = DTYPE_FLOAT32, np.dtype("<f4")
    elif dtype == "uint8":
        code, np_dtype = DTYPE_UINT8, np.dtype("u1")
        for f in frames:
            if not np.isin(f.data, (0.0, 1.0)).all():
                raise ValueError("uint8 output requires binary (0/1) voxels")
    else:
        raise ValueError(f"unsupported NIfTI dtype {dtype!r}")
    hdr = np.zeros(1, dtype=_HDR)[0]
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    dim = np.zeros(8, dtype=np.int16)
    dim[0] = 4 if is_seq else 3
    dim[1:4] = (nx, ny, nz)
    dim[4] = nf if is_seq else 1
    hdr["dim"] = dim
    hdr["datatype"] = code
    hdr["bitpix"] = np_dtype.itemsize * 8
    pixdim = np.zeros(8, dtype=np.float32)
    pixdim[1:4] = frames[0].spacing
    if is_seq and v.frame_rate > 0:
        pixdim[4] = 1.0 / v.frame_rate
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = VOX_OFFSET
    hdr["qform_code"] = 0
    hdr["sform_code"] = 0
    ox, oy, oz = frames[0].origin
    hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"] = ox, oy, oz
    hdr["magic"] = MAGIC
    payload = _stack_xfastest(frames).astype(np_dtype)
    try:
        with open(path, "wb") as fh:
            fh.write(hdr.tobytes())
            fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
            fh.write(payload.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _sidecar_paths(path: str) -> tuple[str, str]:
    stem = os.path.splitext(path)[0]
    return stem + ".raw", stem + ".json"


def _read_raw(path: str):
    raw_path, json_path = _sidecar_paths(path)
    try:
        with open(json_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read sidecar {json_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptHeader(f"{json_path}: invalid JSON ({exc})") from exc
    for key in ("dims", "spacing"):
        if key not in meta:
            raise CorruptHeader(f"{json_path}: required field {key!r} missing")
    dims = tuple(int(d) for d in meta["dims"])
    if len(dims) != 3 or min(dims) < 1:
        raise CorruptHeader(f"{json_path}: dims must be three positive ints, got {dims}")
    spacing = tuple(float(s) for s in meta["spacing"])
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise CorruptHeader(f"{json_path}: spacing must be three positive reals")
    origin = tuple(float(o) for o in meta.get("origin", (0.0, 0.0, 0.0)))
    nf = int(meta.get("frames", 0))
    count = dims[0] * dims[1] * dims[2] * max(nf, 1)
    try:
        with open(raw_path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {raw_path}: {exc}") from exc
    need = count * 4
    if len(blob) < need:
        raise TruncatedData(
            f"{raw_path}: need {need} bytes ({count} float32 voxels) "
            f"but file has {len(blob)}"
        )
    flat = np.frombuffer(blob[:need], dtype="<f4")
    grid = flat.reshape(dims + (max(nf, 1),), order="F")
    frames = [
        Volume3(np.ascontiguousarray(grid[:, :, :, f]), spacing, origin)
        for f in range(max(nf, 1))
    ]
    if nf == 0:
        return frames[0]
    return Sequence4(
        frames,
        frame_rate=float(meta.get("frame_rate", 1.0)),
        ed_index=int(meta.get("ed_index", 0)),
    )


def _write_raw(v: Volume3 | Sequence4, path: str):
    raw_path, json_path = _sidecar_paths(path)
    frames = _frames_of(v)
    meta = {
        "dims": list(frames[0].dims),
        "spacing": list(frames[0].spacing),
        "origin": list(frames[0].origin),
    }
    if isinstance(v, Sequence4):
        meta["frames"] = len(frames)
        meta["frame_rate"] = v.frame_rate
        meta["ed_index"] = v.ed_index
    payload = _stack_xfastest(frames).astype("<f4")
    try:
        with open(raw_path, "wb") as fh:
            fh.write(payload.tobytes())
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {raw_path}: {exc}") from exc
