"""Command-line interface.

Subcommands: register (particle filter), exhaustive (grid-search baseline),
phantom (synthetic case generator), bench (scaling benchmark), summarize
(percentile table over report files).  All angles are degrees and all
lengths millimetres at this boundary.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
failure.
"""

from __future__ import annotations

import argparse
import glob as globmod
import logging
import math
import os
import sys

from . import bench as benchmod
from . import io, phantom, pipeline
from .backend import Executor
from .errors import BadConfig, DataError, InternalError
from .exhaustive import GridSpec
from .geometry import RigidParams, to_matrix
from .smc import SmcConfig
from .volume import Sequence4, Volume3, as_sequence

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage failures exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _csv_values(text: str, count: int, cast, what: str):
    parts = text.split(",")
    if len(parts) != count:
        raise BadConfig(f"--{what} needs {count} comma-separated values, got {text!r}")
    try:
        return tuple(cast(p) for p in parts)
    except ValueError as exc:
        raise BadConfig(f"--{what}: {exc}") from exc


def _ensure_thread_capacity(workers: int):
    """Allow up to `workers` numba threads; must run before numba loads."""
    if "numba" not in sys.modules and "NUMBA_NUM_THREADS" not in os.environ:
        cores = os.cpu_count() or 1
        if workers > cores:
            os.environ["NUMBA_NUM_THREADS"] = str(workers)


def build_parser() -> _Parser:
    parser = _Parser(prog="echoreg", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="info logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    reg = sub.add_parser("register", parents=[], help="particle-filter registration")
    reg.add_argument("--target", required=True, help="target volume (.nii/.raw/.json)")
    reg.add_argument("--source", required=True, help="source volume")
    reg.add_argument("--target-masks", help="target mask volume (3D or 4D)")
    reg.add_argument("--source-masks", help="source mask volume")
    reg.add_argument("--mode", choices=["image", "mask"], default="image")
    reg.add_argument("--particles", type=int, default=256)
    reg.add_argument("--iterations", type=int, default=50)
    reg.add_argument("--t-limit", type=float, default=20.0, help="mm per axis")
    reg.add_argument("--r-limit", type=float, default=15.0, help="degrees per axis")
    reg.add_argument("--sigma-t", type=float, default=2.0, help="mm")
    reg.add_argument("--sigma-r", type=float, default=2.0, help="degrees")
    reg.add_argument("--gamma", type=float, default=0.95, help="noise anneal factor")
    reg.add_argument("--beta", type=float, default=50.0, help="likelihood sharpness")
    reg.add_argument("--ess-frac", type=float, default=0.5)
    reg.add_argument("--seed", type=int, default=0)
    reg.add_argument("--workers", type=int, default=1)
    reg.add_argument(
        "--estimate", choices=["weighted_mean", "best_particle"],
        default="weighted_mean",
    )
    reg.add_argument("--ncc-region", choices=["full", "overlap"], default="full")
    reg.add_argument("--ed-index", type=int, default=None)
    reg.add_argument("--out", required=True, help="report JSON path")
    reg.add_argument("--out-volume", help="write the registered source here")
    reg.set_defaults(func=cmd_register)

    exh = sub.add_parser("exhaustive", help="grid-search baseline")
    exh.add_argument("--target", required=True)
    exh.add_argument("--source", required=True)
    exh.add_argument("--target-masks")
    exh.add_argument("--source-masks")
    exh.add_argument("--mode", choices=["image", "mask"], default="image")
    exh.add_argument(
        "--steps", default="4,4,4,4,4,4",
        help="per-axis half counts m,m,m,m,m,m (rx,ry,rz,tx,ty,tz)",
    )
    exh.add_argument("--step-t", type=float, default=2.5, help="mm")
    exh.add_argument("--step-r", type=float, default=2.0, help="degrees")
    exh.add_argument("--workers", type=int, default=1)
    exh.add_argument("--ed-index", type=int, default=None)
    exh.add_argument("--out", required=True)
    exh.set_defaults(func=cmd_exhaustive)

    pha = sub.add_parser("phantom", help="generate a synthetic case directory")
    pha.add_argument("--dims", default="64,64,64")
    pha.add_argument("--spacing", default="1,1,1")
    pha.add_argument("--frames", type=int, default=5)
    pha.add_argument("--amplitude", type=float, default=0.25)
    pha.add_argument("--speckle", type=float, default=0.3)
    pha.add_argument(
        "--truth", default="6,-4,3,5,-8,4",
        help="tx,ty,tz (mm), rx,ry,rz (degrees)",
    )
    pha.add_argument("--crop", type=float, default=0.0, help="source +x slab fraction")
    pha.add_argument("--seed", type=int, default=0)
    pha.add_argument("--out-dir", required=True)
    pha.set_defaults(func=cmd_phantom)

    ben = sub.add_parser("bench", help="serial-vs-parallel timing")
    ben.add_argument("--case", required=True, help="case directory from `phantom`")
    ben.add_argument("--workers", default="1,2,4,8", help="comma list")
    ben.add_argument("--repeats", type=int, default=3)
    ben.add_argument("--particles", type=int, default=512)
    ben.add_argument("--iterations", type=int, default=4)
    ben.add_argument("--mode", choices=["image", "mask"], default="image")
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument(
        "--backend", default=None,
        help="comma list of kernel backends to compare (numba,numpy)",
    )
    ben.add_argument("--out", required=True, help="CSV path")
    ben.set_defaults(func=cmd_bench)

    summ = sub.add_parser("summarize", help="percentile table over reports")
    summ.add_argument("--reports", required=True, help="glob of report JSON files")
    summ.add_argument("--out", required=True, help="CSV path")
    summ.set_defaults(func=cmd_summarize)
    return parser


def _load_sequence(path: str, ed_index: int | None) -> Sequence4:
    seq = as_sequence(io.read_volume(path))
    if ed_index is not None:
        if not (0 <= ed_index < len(seq)):
            raise BadConfig(
                f"--ed-index {ed_index} outside 0..{len(seq) - 1} for {path}"
            )
        seq = Sequence4(seq.frames, frame_rate=seq.frame_rate, ed_index=ed_index)
    return seq


def _load_masks(path: str | None, n_frames: int, ed_index: int):
    """A per-frame mask list: 4D mask files must match the frame count, a 3D
    file provides the ED mask only."""
    if path is None:
        return None
    loaded = io.read_volume(path)
    if isinstance(loaded, Volume3):
        masks: list[Volume3 | None] = [None] * n_frames
        masks[ed_index] = loaded
        return masks
    if len(loaded) != n_frames:
        raise BadConfig(
            f"{path} has {len(loaded)} mask frames but the image has {n_frames}"
        )
    return list(loaded.frames)


def cmd_register(args) -> int:
    _ensure_thread_capacity(args.workers)
    target = _load_sequence(args.target, args.ed_index)
    source = _load_sequence(args.source, args.ed_index)
    masks_t = _load_masks(args.target_masks, len(target), target.ed_index)
    masks_s = _load_masks(args.source_masks, len(source), source.ed_index)
    cfg = SmcConfig(
        n_particles=args.particles,
        n_iterations=args.iterations,
        t_limit=args.t_limit,
        r_limit=args.r_limit,
        sigma0_t=args.sigma_t,
        sigma0_r=args.sigma_r,
        anneal_gamma=args.gamma,
        beta=args.beta,
        ess_fraction=args.ess_frac,
        seed=args.seed,
        mode=args.mode,
        estimate=args.estimate,
        ncc_region=args.ncc_region,
    )
    cfg.validate()
    executor = Executor(workers=args.workers)
    report = pipeline.register_sequence(
        target, source, masks_t, masks_s, cfg, executor,
        case_id=os.path.basename(args.target),
    )
    report.save(args.out)
    if args.out_volume:
        _write_registered(source, target, report, args.out_volume)
    est = report.estimate_deg_mm
    print(
        "estimate: "
        f"t = ({est['tx_mm']:.3f}, {est['ty_mm']:.3f}, {est['tz_mm']:.3f}) mm, "
        f"r = ({est['rx_deg']:.3f}, {est['ry_deg']:.3f}, {est['rz_deg']:.3f}) deg"
    )
    print(f"report written to {args.out}")
    return EXIT_OK


def _write_registered(source, target, report, path):
    from . import geometry

    est = report.estimate_deg_mm
    params = RigidParams(
        math.radians(est["rx_deg"]),
        math.radians(est["ry_deg"]),
        math.radians(est["rz_deg"]),
        est["tx_mm"],
        est["ty_mm"],
        est["tz_mm"],
    )
    matrix = to_matrix(params, target.grid.physical_center())
    moved = [geometry.resample(f, target.grid, matrix) for f in source.frames]
    if len(moved) == 1:
        io.write_volume(moved[0], path)
    else:
        io.write_volume(
            Sequence4(moved, frame_rate=source.frame_rate, ed_index=source.ed_index),
            path,
        )


def cmd_exhaustive(args) -> int:
    _ensure_thread_capacity(args.workers)
    target = _load_sequence(args.target, args.ed_index)
    source = _load_sequence(args.source, args.ed_index)
    masks_t = _load_masks(args.target_masks, len(target), target.ed_index)
    masks_s = _load_masks(args.source_masks, len(source), source.ed_index)
    half = _csv_values(args.steps, 6, int, "steps")
    grid = GridSpec(half_counts=half, step_t=args.step_t, step_r=args.step_r)
    grid.validate()
    executor = Executor(workers=args.workers)
    report = pipeline.exhaustive_sequence(
        target, source, masks_t, masks_s, grid, mode=args.mode,
        executor=executor, case_id=os.path.basename(args.target),
    )
    report.save(args.out)
    print(f"searched {grid.n_nodes} nodes; report written to {args.out}")
    return EXIT_OK


def cmd_phantom(args) -> int:
    dims = _csv_values(args.dims, 3, int, "dims")
    spacing = _csv_values(args.spacing, 3, float, "spacing")
    t = _csv_values(args.truth, 6, float, "truth")
    truth = RigidParams(
        math.radians(t[3]), math.radians(t[4]), math.radians(t[5]),
        t[0], t[1], t[2],
    )
    spec = phantom.PhantomSpec(
        dims=dims,
        spacing=spacing,
        frames=args.frames,
        amplitude=args.amplitude,
        speckle_sigma=args.speckle,
        seed=args.seed,
    )
    seq, masks = phantom.make_phantom(spec)
    case = phantom.make_pair(
        seq, masks, truth, overlap_crop=args.crop, seed=args.seed,
        case_id=os.path.basename(os.path.normpath(args.out_dir)),
    )
    phantom.save_case(case, args.out_dir)
    print(
        f"case written to {args.out_dir} "
        f"(initial ED Dice {case.initial_dsc:.3f})"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    workers = [int(w) for w in args.workers.split(",") if w]
    if not workers:
        raise BadConfig("--workers must name at least one worker count")
    _ensure_thread_capacity(max(workers))
    case = phantom.load_case(args.case)
    cfg = SmcConfig(
        n_particles=args.particles,
        n_iterations=args.iterations,
        seed=args.seed,
        mode=args.mode,
    )
    cfg.validate()
    backends = args.backend.split(",") if args.backend else [None]
    results = []
    for backend in backends:
        rs = benchmod.run_bench(case, workers, args.repeats, cfg, backend=backend)
        if len(backends) > 1:
            for r in rs:
                r.case_id = f"{r.case_id}:{backend}"
        results.extend(rs)
    benchmod.write_bench_csv(results, args.out)
    for r in results:
        print(
            f"{r.case_id}: {r.workers} workers -> {r.wall_s:.3f} s "
            f"(speedup {r.speedup:.2f}, checksum {r.checksum})"
        )
    print(f"CSV written to {args.out}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    paths = sorted(globmod.glob(args.reports))
    if not paths:
        raise BadConfig(f"--reports glob {args.reports!r} matched no files")
    reports = [pipeline.RegistrationReport.load(p) for p in paths]
    rows = pipeline.percentile_summary(reports)
    pipeline.write_summary_csv(rows, args.out)
    for row in rows:
        print(
            f"{row['stat']:>3}: diff {row['dsc_diff']:+.3f} "
            f"final {row['final_dsc']:.3f} ({row['case_id']})"
        )
    print(f"summary written to {args.out}")
    return EXIT_OK


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except BadConfig as exc:
        print(f"echoreg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"echoreg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InternalError, AssertionError) as exc:
        print(f"echoreg: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main():
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
