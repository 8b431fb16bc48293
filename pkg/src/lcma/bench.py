"""Timing, effective-FLOPS reporting, precision measurement and shape sweeps."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from .decision import STANDARD_GEMM, HardwareProfile, estimate_time, select
from .dense import OpCounters, TileConfig, blocked_gemm, naive_gemm, random_matrix
from .errors import LcmaError
from .fused import ExecConfig, lcma_fused, precombine_b
from .scheme import LcmaScheme
from .staged import lcma_staged

EXECUTORS = ("fused", "staged", "standard")


class Shape(NamedTuple):
    M: int
    N: int
    K: int

    def __str__(self):
        return f"{self.M}x{self.K}x{self.N}"


class ShapeParseError(LcmaError, ValueError):
    pass


def _dims(tokens: Sequence[str], where: str) -> Shape:
    try:
        m, k, n = (int(t) for t in tokens)
    except ValueError:
        raise ShapeParseError(f"{where}expected three integers M K N, got {' '.join(tokens)!r}") from None
    if min(m, k, n) < 1:
        raise ShapeParseError(f"{where}dimensions must be >= 1")
    return Shape(m, n, k)


def parse_shape(text: str) -> Shape:
    """``MxKxN`` as written on the command line."""
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ShapeParseError(f"shape must look like MxKxN, got {text!r}")
    return _dims(parts, "")


def parse_shape_list(text: str, path: str = "<shapes>") -> List[Shape]:
    shapes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        if len(line) != 3:
            raise ShapeParseError(f"{path}:{lineno}: expected 'M K N', got {raw.strip()!r}")
        shapes.append(_dims(line, f"{path}:{lineno}: "))
    return shapes


def read_shape_list(path) -> List[Shape]:
    with open(path, encoding="utf-8") as fh:
        return parse_shape_list(fh.read(), str(path))


def median_time(fn: Callable[[], object], reps: int, warmup: int = 1) -> float:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def effective_flops(shape: Shape, seconds: float) -> float:
    """2MNK / t, the standard-GEMM count whatever algorithm ran."""
    return 2.0 * shape.M * shape.N * shape.K / seconds if seconds > 0 else float("inf")


def relative_errors(c: np.ndarray, ref: np.ndarray):
    """Normwise (max, mean) relative error of ``c`` against ``ref``."""
    ref = np.asarray(ref, dtype=np.float64)
    diff = np.abs(np.asarray(c, dtype=np.float64) - ref)
    mag = np.abs(ref)
    max_err = float(diff.max() / mag.max()) if diff.max() > 0 else 0.0
    mean_err = float(diff.mean() / mag.mean()) if diff.mean() > 0 else 0.0
    return max_err, mean_err


@dataclass
class BenchRecord:
    M: int
    N: int
    K: int
    algorithm: str
    executor: str
    seconds: float
    effective_flops: float
    multiply_count: int
    speedup: float


@dataclass
class PrecisionRecord:
    M: int
    N: int
    K: int
    scheme: str
    executor: str
    max_rel_error: float
    mean_rel_error: float


@dataclass
class SweepRow:
    kind: str  # "decision" or "measure"
    M: int
    N: int
    K: int
    algorithm: str
    decision: str
    predicted_seconds: float
    measured_seconds: Optional[float]
    effective_flops: Optional[float]


def write_records(records: Sequence, fh, record_type=None) -> None:
    """CSV with a header row taken from the record dataclass."""
    record_type = record_type or (type(records[0]) if records else None)
    if record_type is None:
        raise ValueError("cannot infer a header from an empty record list")
    writer = csv.writer(fh, lineterminator="\n")
    names = [f.name for f in fields(record_type)]
    writer.writerow(names)
    for rec in records:
        row = asdict(rec)
        writer.writerow(["" if row[n] is None else row[n] for n in names])


def _inputs(shape: Shape, seed: int, exact: bool):
    rng = np.random.default_rng(seed)
    dtype = np.int64 if exact else np.float32
    return random_matrix(shape.M, shape.K, rng, dtype), random_matrix(shape.K, shape.N, rng, dtype)


def _runner(scheme: LcmaScheme, executor: str, b, config: ExecConfig, tile: TileConfig):
    if executor == "fused":
        return lambda a, counters=None: lcma_fused(a, b, scheme, config, counters)
    if executor == "staged":
        return lambda a, counters=None: lcma_staged(a, b, scheme, counters, tile, config.workers)
    raise ValueError(f"executor must be one of {EXECUTORS}, got {executor!r}")


def run_bench(
    shape: Shape,
    schemes: Iterable[LcmaScheme],
    executor: str = "fused",
    reps: int = 3,
    seed: int = 0,
    workers: int = 1,
    tile: TileConfig | None = None,
    cache_aware: bool = False,
    use_precombined_b: bool = False,
    exact: bool = False,
) -> List[BenchRecord]:
    """Baseline blocked GEMM row followed by one row per scheme.

    Precombining B happens before timing, as it would for static weights.
    """
    tile = tile or TileConfig()
    a, b = _inputs(shape, seed, exact)

    base_counts = OpCounters()
    blocked_gemm(a, b, tile, base_counts, workers=workers)
    base_t = median_time(lambda: blocked_gemm(a, b, tile, workers=workers), reps)
    records = [
        BenchRecord(*shape, STANDARD_GEMM, "standard", base_t, effective_flops(shape, base_t), base_counts.scalar_multiplies, 1.0)
    ]
    if executor == "standard":
        return records

    for scheme in schemes:
        config = ExecConfig(tile.tile_m, tile.tile_n, tile.tile_k, workers, cache_aware)
        if use_precombined_b and executor == "fused":
            config.precombined_b = precombine_b(b, scheme, workers)
        run = _runner(scheme, executor, b, config, tile)
        counts = OpCounters()
        run(a, counts)
        t = median_time(lambda: run(a), reps)
        records.append(
            BenchRecord(*shape, scheme.name, executor, t, effective_flops(shape, t), counts.scalar_multiplies, base_t / t)
        )
    return records


def run_precision(
    shape: Shape,
    schemes: Iterable[LcmaScheme],
    seed: int = 0,
    workers: int = 1,
    tile: TileConfig | None = None,
    dtype=np.float32,
) -> List[PrecisionRecord]:
    """Errors of standard, staged and fused runs against a 64-bit oracle.

    All three accumulate in 64-bit. The staged path rounds each H_r to the
    working precision when it stores it; the fused path keeps H_r in its
    wide local buffer and rounds only the final C.
    """
    dtype = np.dtype(dtype)
    if dtype.kind != "f":
        raise ValueError("precision analysis needs a float element type")
    tile = tile or TileConfig()
    rng = np.random.default_rng(seed)
    a = random_matrix(shape.M, shape.K, rng, dtype)
    b = random_matrix(shape.K, shape.N, rng, dtype)
    ref = naive_gemm(a, b, dtype=np.float64)

    out = [PrecisionRecord(*shape, STANDARD_GEMM, "standard", *relative_errors(blocked_gemm(a, b, tile, workers=workers, wide=True), ref))]
    for scheme in schemes:
        config = ExecConfig(tile.tile_m, tile.tile_n, tile.tile_k, workers, wide=True)
        staged = lcma_staged(a, b, scheme, tile=tile, workers=workers, wide=True)
        fused = lcma_fused(a, b, scheme, config)
        out.append(PrecisionRecord(*shape, scheme.name, "staged", *relative_errors(staged, ref)))
        out.append(PrecisionRecord(*shape, scheme.name, "fused", *relative_errors(fused, ref)))
    return out


def run_sweep(
    shapes: Iterable[Shape],
    schemes: Sequence[LcmaScheme],
    hw: HardwareProfile,
    reps: int = 1,
    seed: int = 0,
    workers: int = 1,
    tile: TileConfig | None = None,
    measure: bool = True,
) -> List[SweepRow]:
    """Per shape: one decision row, then (optionally) one measured row per algorithm."""
    tile = tile or TileConfig()
    rows: List[SweepRow] = []
    for shape in shapes:
        M, N, K = shape
        dec = select(schemes, M, N, K, hw)
        rows.append(SweepRow("decision", M, N, K, dec.choice, dec.choice, dec.predicted_time[dec.choice], None, None))
        if not measure:
            continue
        a, b = _inputs(shape, seed, exact=False)
        t = median_time(lambda: blocked_gemm(a, b, tile, workers=workers), reps)
        rows.append(
            SweepRow("measure", M, N, K, STANDARD_GEMM, dec.choice, estimate_time(STANDARD_GEMM, M, N, K, hw), t, effective_flops(shape, t))
        )
        for scheme in schemes:
            config = ExecConfig(tile.tile_m, tile.tile_n, tile.tile_k, workers)
            t = median_time(lambda: lcma_fused(a, b, scheme, config), reps)
            rows.append(
                SweepRow("measure", M, N, K, scheme.name, dec.choice, estimate_time(scheme, M, N, K, hw), t, effective_flops(shape, t))
            )
    return rows
