"""Serial-vs-parallel timing of one registration case.

For every requested worker count the same registration runs once as warm-up
(discarded) and `repeats` times for timing; the median is reported along
with the speedup against the 1-worker median.  Before any timing is
reported, the final estimates of all runs must agree bit for bit, which
turns silent non-determinism into a hard ChecksumMismatch.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass, field

from .backend import Executor
from .errors import BadConfig, ChecksumMismatch, MissingMasks
from .smc import SmcConfig, register_smc
from .volume import binarize, normalize_zscore


@dataclass
class BenchResult:
    case_id: str
    workers: int
    wall_s: float            # median over repeats
    per_iteration_s: float
    speedup: float           # vs the 1-worker median
    checksum: str
    repeat_times_s: list[float] = field(default_factory=list)
    backend: str = "auto"


def _estimate_checksum(params) -> str:
    return hashlib.sha256(params.to_array().tobytes()).hexdigest()[:16]


def prepare_inputs(case, cfg: SmcConfig):
    """ED-frame registration inputs for the config's mode."""
    ed_t, ed_s = case.target.ed_index, case.source.ed_index
    if cfg.mode == "mask":
        if not case.target_masks or not case.source_masks:
            raise MissingMasks("bench case lacks masks for mask mode")
        return (
            binarize(case.target_masks[ed_t], 0.5),
            binarize(case.source_masks[ed_s], 0.5),
        )
    return (
        normalize_zscore(case.target.frames[ed_t]),
        normalize_zscore(case.source.frames[ed_s]),
    )


def run_bench(
    case,
    worker_counts: list[int],
    repeats: int,
    cfg: SmcConfig | None = None,
    backend: str | None = None,
) -> list[BenchResult]:
    """Time the case at each worker count; raises ChecksumMismatch (and
    withholds all timings) if any run's estimate differs."""
    if repeats < 1:
        raise BadConfig(f"repeats must be >= 1, got {repeats}")
    if not worker_counts or any(w < 1 for w in worker_counts):
        raise BadConfig(f"worker counts must be >= 1, got {worker_counts}")
    cfg = cfg or SmcConfig()
    target, source = prepare_inputs(case, cfg)

    def one_run(workers: int):
        executor = Executor(workers=workers, backend=backend)
        t0 = time.perf_counter()
        est, _ = register_smc(target, source, cfg, executor)
        return time.perf_counter() - t0, _estimate_checksum(est)

    timings: list[tuple[int, list[float], str]] = []
    reference_sum: str | None = None
    for workers in worker_counts:
        one_run(workers)  # warm-up, discarded
        times = []
        checksum = None
        for _ in range(repeats):
            elapsed, current = one_run(workers)
            times.append(elapsed)
            if checksum is None:
                checksum = current
            elif current != checksum:
                raise ChecksumMismatch(
                    f"estimate changed between repeats at {workers} workers"
                )
        if reference_sum is None:
            reference_sum = checksum
        elif checksum != reference_sum:
            raise ChecksumMismatch(
                f"estimate at {workers} workers ({checksum}) differs from "
                f"{worker_counts[0]} workers ({reference_sum}); "
                "timings withheld"
            )
        timings.append((workers, times, checksum))

    def median(xs):
        xs = sorted(xs)
        mid = len(xs) // 2
        return xs[mid] if len(xs) % 2 else 0.5 * (xs[mid - 1] + xs[mid])

    base = median(timings[0][1])
    results = []
    for workers, times, checksum in timings:
        med = median(times)
        results.append(
            BenchResult(
                case_id=case.case_id,
                workers=workers,
                wall_s=med,
                per_iteration_s=med / cfg.n_iterations,
                speedup=base / med,
                checksum=checksum,
                repeat_times_s=times,
                backend=backend or "auto",
            )
        )
    return results


def write_bench_csv(results: list[BenchResult], path: str):
    """CSV rows: one per repeat plus a median row per worker count."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case", "workers", "repeat", "wall_s", "speedup", "checksum"])
        for r in results:
            for idx, t in enumerate(r.repeat_times_s):
                writer.writerow([r.case_id, r.workers, idx, f"{t:.6f}", "", r.checksum])
            writer.writerow(
                [
                    r.case_id,
                    r.workers,
                    "median",
                    f"{r.wall_s:.6f}",
                    f"{r.speedup:.3f}",
                    r.checksum,
                ]
            )
