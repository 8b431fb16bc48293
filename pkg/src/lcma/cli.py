"""Command-line entry point: ``lcma <command> [options]``."""

from __future__ import annotations

import argparse
import contextlib
import itertools
import math
import os
import sys
from typing import List, Sequence

import numpy as np

from . import bench
from .calibrate import CalibrationSizes, calibrate
from .decision import (
    STANDARD_GEMM,
    HardwareProfile,
    RooflineRow,
    compute_ceiling,
    crossover,
    default_intensity_grid,
    roofline_table,
    select,
)
from .dense import TileConfig, default_workers
from .errors import LcmaError
from .library import STRASSEN, builtin_catalog, load_scheme
from .schedule import (
    cache_aware_reorder,
    group_granular_waves,
    plan_split_group,
    r_alignment,
    split_group_waves,
    wave_waste,
    write_schedule_csv,
)
from .scheme import LcmaScheme, validate_scheme


class CliError(LcmaError):
    pass


def _positive(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return val


def _tile(text: str) -> TileConfig:
    try:
        return TileConfig.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _shape(text: str) -> bench.Shape:
    try:
        return bench.parse_shape(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def resolve_schemes(names: Sequence[str] | None, default: Sequence[str] = (), builtin: bool = True) -> List[LcmaScheme]:
    """Schemes by builtin name or by file path; file schemes are validated on load."""
    catalog = builtin_catalog()
    if not names:
        return [catalog[n] for n in default] if builtin else []
    out = []
    for name in names:
        if builtin and name in catalog:
            out.append(catalog[name])
        elif os.path.isfile(name):
            out.append(load_scheme(name))
        else:
            known = ", ".join(s.name for s in catalog)
            raise CliError(f"unknown scheme {name!r} (builtin: {known}; or give a scheme file path)")
    return out


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _note(args, text: str) -> None:
    # human-readable notes stay off stdout when CSV is written there
    stream = sys.stderr if getattr(args, "out", None) in (None, "-") else sys.stdout
    print(text, file=stream)


# --------------------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    if not args.paths and not args.builtin:
        args.parser.error("give scheme files to validate, or --builtin")
    targets = []
    if args.builtin:
        targets.extend((s.name, s) for s in builtin_catalog())
    for path in args.paths:
        try:
            targets.append((path, load_scheme(path, validate=False)))
        except LcmaError as exc:
            print(f"FAIL {path}: {exc}")
            targets.append((path, None))
    failed = 0
    for label, scheme in targets:
        if scheme is None:
            failed += 1
            continue
        report = validate_scheme(scheme)
        if report.valid:
            print(f"PASS {label} <{scheme.m},{scheme.k},{scheme.n}> R={scheme.rank} nnz={scheme.nnz}")
        else:
            failed += 1
            f = report.failures[0]
            print(
                f"FAIL {label}: identity broken at (i,i',l,l',j,j')={f.index} "
                f"observed {f.observed} expected {f.expected} ({len(report.failures)} failing entries)"
            )
    return 1 if failed else 0


def cmd_bench(args) -> int:
    schemes = resolve_schemes(args.scheme, default=[STRASSEN])
    records = bench.run_bench(
        args.shape,
        schemes,
        executor=args.executor,
        reps=args.reps,
        seed=args.seed,
        workers=args.workers,
        tile=args.tile,
        cache_aware=args.cache_aware,
        use_precombined_b=args.precombine_b,
        exact=args.exact,
    )
    with _output(args.out) as fh:
        bench.write_records(records, fh, bench.BenchRecord)
    return 0


def cmd_sweep(args) -> int:
    hw = HardwareProfile.load(args.profile)
    shapes = bench.read_shape_list(args.shapes)
    schemes = resolve_schemes(args.scheme, default=[s.name for s in builtin_catalog()])
    rows = bench.run_sweep(shapes, schemes, hw, args.reps, args.seed, args.workers, args.tile, measure=not args.no_measure)
    with _output(args.out) as fh:
        bench.write_records(rows, fh, bench.SweepRow)
    return 0


def cmd_decide(args) -> int:
    hw = HardwareProfile.load(args.profile)
    schemes = resolve_schemes(args.scheme, default=[s.name for s in builtin_catalog()])
    M, N, K = args.shape
    dec = select(schemes, M, N, K, hw, fused=not args.staged)
    print(f"shape M={M} N={N} K={K}  profile flops_mul/beta={hw.ridge:.6g}")
    if dec.memory_bound:
        print("standard GEMM is memory-bound at this shape; no LCMA can help")
    print(f"choice: {dec.choice}")
    print(f"predicted speedup vs {STANDARD_GEMM}: {dec.predicted_speedup:.6g}")
    print(f"mode: {'fused' if dec.fused else 'staged'}")
    for name in sorted(dec.predicted_time, key=lambda n: (dec.predicted_time[n], n)):
        print(f"  {name:<28s} {dec.predicted_time[name]:.6e} s")
    return 0


def cmd_schedule_sim(args) -> int:
    g, r, w = args.groups, args.rank, args.workers
    sched = plan_split_group(g, r, w)
    before = r_alignment(sched)
    if args.cache_aware:
        sched = cache_aware_reorder(sched)
    after = r_alignment(sched)
    print(f"tiles: {g * r}  workers: {w}")
    print(f"group-granular waves: {group_granular_waves(g, r, w)}")
    print(f"split-group waves (ideal): {split_group_waves(g, r, w)}")
    print(f"split-group waves (planned): {sched.waves}  balanced: {sched.balanced}")
    print(f"wave waste of group-granular: {100 * wave_waste(g, r, w):.2f}%")
    print(f"split groups: {len(sched.splits)}")
    print(f"r-alignment: {before:.4f} before reorder, {after:.4f} after")
    if args.out:
        with _output(args.out) as fh:
            write_schedule_csv(sched, fh)
    return 0


def cmd_precision(args) -> int:
    if args.exact:
        raise CliError("precision analysis runs in float mode; drop --exact")
    schemes = resolve_schemes(args.scheme, default=[STRASSEN])
    records = bench.run_precision(args.shape, schemes, args.seed, args.workers, args.tile, np.dtype(args.dtype))
    with _output(args.out) as fh:
        bench.write_records(records, fh, bench.PrecisionRecord)
    return 0


def cmd_roofline(args) -> int:
    if args.points < 2:
        raise CliError("--points must be >= 2")
    hw = HardwareProfile.load(args.profile)
    schemes = resolve_schemes(args.scheme, default=[] if args.no_builtin else [s.name for s in builtin_catalog()])
    grid = default_intensity_grid(args.min_intensity, args.max_intensity, args.points)
    rows = roofline_table(schemes, hw, grid)
    rows.append(RooflineRow(math.inf, f"ceiling:{STANDARD_GEMM}", compute_ceiling(STANDARD_GEMM, hw)))
    rows.extend(RooflineRow(math.inf, f"ceiling:{s.name}", compute_ceiling(s, hw)) for s in schemes)
    with _output(args.out) as fh:
        bench.write_records(rows, fh, RooflineRow)

    ladder = [STANDARD_GEMM] + sorted(
        (s for s in schemes if s.is_lower_complexity), key=lambda s: (compute_ceiling(s, hw), s.name)
    )
    for lo, hi in itertools.combinations(ladder, 2):
        at = crossover(lo, hi, hw, grid)
        lo_name = lo if isinstance(lo, str) else lo.name
        where = "never within the grid" if at is None else f"from intensity {at:.6g}"
        _note(args, f"crossover {lo_name} -> {hi.name}: {where}")
    return 0


def cmd_calibrate(args) -> int:
    sizes = CalibrationSizes(args.gemm_n, args.stream_elems)
    hw = calibrate(args.samples, sizes, args.workers, args.tile)
    if args.out:
        hw.save(args.out)
    sys.stdout.write(hw.to_text())
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcma", description="Lower-complexity matrix multiplication toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=_positive, default=default_workers(), help="worker threads (default: CPU count)")
    common.add_argument("--tile", type=_tile, default=TileConfig(), help="inner tile extents m,n,k (default 64,64,64)")
    common.add_argument("--seed", type=int, default=0, help="seed for random inputs")
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--scheme", action="append", help="builtin scheme name or scheme file; repeatable")

    p = sub.add_parser("validate", help="check schemes against the exact bilinear identity")
    p.add_argument("paths", nargs="*", help="scheme files")
    p.add_argument("--builtin", action="store_true", help="validate the builtin catalog")
    p.set_defaults(func=cmd_validate, parser=p)

    p = sub.add_parser("bench", parents=[common], help="time executors and report effective FLOPS")
    p.add_argument("--shape", type=_shape, required=True, help="MxKxN")
    p.add_argument("--reps", type=_positive, default=3)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--fused", dest="executor", action="store_const", const="fused")
    mode.add_argument("--staged", dest="executor", action="store_const", const="staged")
    mode.add_argument("--standard", dest="executor", action="store_const", const="standard")
    p.add_argument("--cache-aware", action="store_true")
    p.add_argument("--precombine-b", action="store_true", help="combine B once before timing")
    p.add_argument("--exact", action="store_true", help="integer inputs")
    p.set_defaults(func=cmd_bench, executor="fused")

    p = sub.add_parser("sweep", parents=[common], help="replay a shape list through select and the executors")
    p.add_argument("shapes", help="file with one 'M K N' per line")
    p.add_argument("--profile", required=True)
    p.add_argument("--reps", type=_positive, default=1)
    p.add_argument("--no-measure", action="store_true", help="decision rows only")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("decide", parents=[common], help="pick the fastest predicted algorithm for a shape")
    p.add_argument("--shape", type=_shape, required=True, help="MxKxN")
    p.add_argument("--profile", required=True)
    p.add_argument("--staged", action="store_true", help="cost the unfused pipeline")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("schedule-sim", help="plan a split-group schedule and report waves")
    p.add_argument("--groups", type=_positive, required=True)
    p.add_argument("--rank", type=_positive, required=True)
    p.add_argument("--workers", type=_positive, required=True)
    p.add_argument("--cache-aware", action="store_true")
    p.add_argument("--out", help="write the schedule as CSV")
    p.set_defaults(func=cmd_schedule_sim)

    p = sub.add_parser("precision", parents=[common], help="relative error against a 64-bit oracle")
    p.add_argument("--shape", type=_shape, required=True, help="MxKxN")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--exact", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_precision)

    p = sub.add_parser("roofline", parents=[common], help="effective-FLOPS roofline as CSV")
    p.add_argument("--profile", required=True)
    p.add_argument("--no-builtin", action="store_true", help="only schemes named with --scheme")
    p.add_argument("--min-intensity", type=float, default=1.0)
    p.add_argument("--max-intensity", type=float, default=1e5)
    p.add_argument("--points", type=_positive, default=61)
    p.set_defaults(func=cmd_roofline)

    p = sub.add_parser("calibrate", help="measure a hardware profile")
    p.add_argument("--samples", type=int, default=3)
    p.add_argument("--workers", type=_positive, default=default_workers())
    p.add_argument("--tile", type=_tile, default=TileConfig())
    p.add_argument("--gemm-n", type=_positive, default=512)
    p.add_argument("--stream-elems", type=_positive, default=1 << 22)
    p.add_argument("--out", help="profile file to write")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LcmaError, ValueError, OSError) as exc:
        print(f"lcma {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
