"""4D orchestration: register the end-diastolic frames, propagate the single
estimated transform to every frame of the cycle, score each frame before and
after, and serialize a machine-readable report.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry
from .backend import Executor
from .errors import (
    DegenerateInput,
    EmptyInput,
    GeometryMismatch,
    MissingMasks,
)
from .exhaustive import GridSpec, register_exhaustive
from .geometry import RigidParams, to_matrix
from .metrics import dice, dice_under_transform, ncc
from .smc import SmcConfig, SmcTrace, register_smc, _params_external
from .volume import Sequence4, Volume3, binarize, normalize_zscore

REPORT_SCHEMA = 1


@dataclass
class RegistrationReport:
    """Per-frame and aggregate scores for one registered pair."""

    mode: str
    method: str
    config: dict
    estimate_deg_mm: dict
    best_estimate_deg_mm: dict | None
    ncc_before: list[float]
    ncc_after: list[float]
    dsc_before: list[float | None]
    dsc_after: list[float | None]
    aggregates: dict
    trace: dict | None
    wall_time_s: float
    case_id: str = "case"
    schema: int = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "RegistrationReport":
        known = {f for f in RegistrationReport.__dataclass_fields__}
        return RegistrationReport(**{k: v for k, v in d.items() if k in known})

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @staticmethod
    def load(path: str) -> "RegistrationReport":
        with open(path, "r", encoding="utf-8") as fh:
            return RegistrationReport.from_dict(json.load(fh))

    def mean_dsc_before(self) -> float:
        return _mean_or_nan(self.dsc_before)

    def mean_dsc_after(self) -> float:
        return _mean_or_nan(self.dsc_after)

    def dsc_difference(self) -> float:
        return self.mean_dsc_after() - self.mean_dsc_before()


def _mean_or_nan(values) -> float:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else float("nan")


def _mean_std(values) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    return float(np.mean(vals)), float(np.std(vals))


def _check_compatible(target: Sequence4, source: Sequence4):
    if not target.grid.same_grid(source.grid):
        raise GeometryMismatch(
            f"target grid {target.grid.dims}/{target.grid.spacing}"
            f"/{target.grid.origin} differs from source "
            f"{source.grid.dims}/{source.grid.spacing}/{source.grid.origin}"
        )


def _normalize_frames(seq: Sequence4) -> list[Volume3]:
    return [normalize_zscore(f) for f in seq.frames]


def _mask_at(masks, index: int) -> Volume3 | None:
    if masks is None or index >= len(masks) or masks[index] is None:
        return None
    return masks[index]


def score_frames(
    target_frames: list[Volume3],
    source_frames: list[Volume3],
    masks_t,
    masks_s,
    matrix: np.ndarray,
):
    """Before/after NCC per frame and DSC per frame where masks exist.

    The same transform is applied to every frame; frames lacking masks get
    null DSC entries so the arrays stay frame-aligned.
    """
    ncc_before, ncc_after = [], []
    dsc_before, dsc_after = [], []
    for f, (tgt, src) in enumerate(zip(target_frames, source_frames)):
        ncc_before.append(float(ncc(tgt, src)))
        moved = geometry.resample(src, tgt, matrix)
        try:
            ncc_after.append(float(ncc(tgt, moved)))
        except DegenerateInput:
            ncc_after.append(0.0)
        tm, sm = _mask_at(masks_t, f), _mask_at(masks_s, f)
        if tm is not None and sm is not None:
            dsc_before.append(float(dice(tm, sm)))
            dsc_after.append(float(dice_under_transform(sm, tm, matrix)))
        else:
            dsc_before.append(None)
            dsc_after.append(None)
    return ncc_before, ncc_after, dsc_before, dsc_after


def _aggregates(ncc_before, ncc_after, dsc_before, dsc_after) -> dict:
    out = {}
    for name, vals in (
        ("ncc_before", ncc_before),
        ("ncc_after", ncc_after),
        ("dsc_before", dsc_before),
        ("dsc_after", dsc_after),
    ):
        mean, std = _mean_std(vals)
        out[f"{name}_mean"] = mean
        out[f"{name}_std"] = std
    return out


def register_sequence(
    target: Sequence4,
    source: Sequence4,
    masks_t: list[Volume3] | None,
    masks_s: list[Volume3] | None,
    cfg: SmcConfig,
    executor: Executor | None = None,
    case_id: str = "case",
) -> RegistrationReport:
    """Estimate one transform from the ED frame pair and apply it everywhere.

    Image mode registers the z-normalized ED frames; mask mode registers the
    binarized ED masks and applies the resulting transform to the images.
    NCC scoring always runs on the normalized image frames so before/after
    values are comparable across modes.
    """
    t0 = time.perf_counter()
    _check_compatible(target, source)
    norm_t = _normalize_frames(target)
    norm_s = _normalize_frames(source)
    ed_t, ed_s = target.ed_index, source.ed_index
    ed_mask_t = _mask_at(masks_t, ed_t)
    ed_mask_s = _mask_at(masks_s, ed_s)
    if cfg.mode == "mask":
        if ed_mask_t is None or ed_mask_s is None:
            raise MissingMasks(
                "mask-mode registration needs target and source masks for "
                "the ED frame"
            )
        reg_t = binarize(ed_mask_t, 0.5)
        reg_s = binarize(ed_mask_s, 0.5)
    else:
        reg_t = norm_t[ed_t]
        reg_s = norm_s[ed_s]
    trace_masks = None
    if ed_mask_t is not None and ed_mask_s is not None:
        trace_masks = (binarize(ed_mask_t, 0.5), binarize(ed_mask_s, 0.5))
    est, trace = register_smc(reg_t, reg_s, cfg, executor, trace_masks=trace_masks)
    matrix = to_matrix(est, reg_t.physical_center())
    ncc_b, ncc_a, dsc_b, dsc_a = score_frames(
        norm_t, norm_s, masks_t, masks_s, matrix
    )
    best = (
        _params_external(trace.best_particle)
        if trace.best_particle is not None
        else None
    )
    return RegistrationReport(
        mode=cfg.mode,
        method="smc",
        config=asdict(cfg),
        estimate_deg_mm=_params_external(est),
        best_estimate_deg_mm=best,
        ncc_before=ncc_b,
        ncc_after=ncc_a,
        dsc_before=dsc_b,
        dsc_after=dsc_a,
        aggregates=_aggregates(ncc_b, ncc_a, dsc_b, dsc_a),
        trace=trace.to_dict(),
        wall_time_s=time.perf_counter() - t0,
        case_id=case_id,
    )


def exhaustive_sequence(
    target: Sequence4,
    source: Sequence4,
    masks_t,
    masks_s,
    grid: GridSpec,
    mode: str = "image",
    executor: Executor | None = None,
    case_id: str = "case",
) -> RegistrationReport:
    """Grid-search counterpart of register_sequence (same report shape)."""
    t0 = time.perf_counter()
    _check_compatible(target, source)
    norm_t = _normalize_frames(target)
    norm_s = _normalize_frames(source)
    ed_t, ed_s = target.ed_index, source.ed_index
    if mode == "mask":
        tm, sm = _mask_at(masks_t, ed_t), _mask_at(masks_s, ed_s)
        if tm is None or sm is None:
            raise MissingMasks("mask-mode grid search needs ED masks")
        reg_t, reg_s = binarize(tm, 0.5), binarize(sm, 0.5)
    else:
        reg_t, reg_s = norm_t[ed_t], norm_s[ed_s]
    est, best_value = register_exhaustive(reg_t, reg_s, grid, executor)
    matrix = to_matrix(est, reg_t.physical_center())
    ncc_b, ncc_a, dsc_b, dsc_a = score_frames(
        norm_t, norm_s, masks_t, masks_s, matrix
    )
    return RegistrationReport(
        mode=mode,
        method="exhaustive",
        config={
            "half_counts": list(grid.half_counts),
            "step_t": grid.step_t,
            "step_r": grid.step_r,
            "best_ncc": float(best_value),
        },
        estimate_deg_mm=_params_external(est),
        best_estimate_deg_mm=None,
        ncc_before=ncc_b,
        ncc_after=ncc_a,
        dsc_before=dsc_b,
        dsc_after=dsc_a,
        aggregates=_aggregates(ncc_b, ncc_a, dsc_b, dsc_a),
        trace=None,
        wall_time_s=time.perf_counter() - t0,
        case_id=case_id,
    )


QUANTILE_LABELS = ("min", "q1", "q2", "q3", "max")
QUANTILE_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)


def percentile_summary(reports: list[RegistrationReport]) -> list[dict]:
    """Five-number summary over the per-pair mean DSC differences.

    Quantiles interpolate linearly between closest ranks; the reported final
    DSC (and pair id) belong to the pair whose difference is nearest the
    quantile, lower rank winning ties.
    """
    usable = [r for r in reports if not math.isnan(r.dsc_difference())]
    if not usable:
        raise EmptyInput("no report carries DSC values")
    diffs = np.array([r.dsc_difference() for r in usable])
    finals = [r.mean_dsc_after() for r in usable]
    rows = []
    for label, level in zip(QUANTILE_LABELS, QUANTILE_LEVELS):
        q = float(np.quantile(diffs, level, method="linear"))
        nearest = int(np.argmin(np.abs(diffs - q)))
        rows.append(
            {
                "stat": label,
                "dsc_diff": q,
                "final_dsc": finals[nearest],
                "case_id": usable[nearest].case_id,
            }
        )
    return rows


def write_summary_csv(rows: list[dict], path: str):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["stat", "dsc_diff", "final_dsc", "case_id"]
        )
        writer.writeheader()
        writer.writerows(rows)
