"""Microbenchmarks that fill a HardwareProfile for this machine."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .decision import HardwareProfile
from .dense import TileConfig, blocked_gemm, default_workers
from .errors import CalibrationError

# a timed region must span this many timer ticks to count
MIN_TICKS = 1000


@dataclass(frozen=True)
class CalibrationSizes:
    gemm_n: int = 512
    stream_elems: int = 1 << 22


def timer_resolution() -> float:
    return time.get_clock_info("perf_counter").resolution


def _time_once(fn: Callable[[], object]) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def _timed(fn: Callable[[], object], label: str) -> float:
    elapsed = _time_once(fn)
    floor = MIN_TICKS * timer_resolution()
    if elapsed < floor:
        raise CalibrationError(
            f"{label} took {elapsed:.3g}s, below {floor:.3g}s of timer resolution; rerun with larger sizes"
        )
    return elapsed


def measure_flops_mul(n: int, workers: int, tile: TileConfig | None = None, dtype=np.float32) -> float:
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (n, n)).astype(dtype)
    b = rng.uniform(-1, 1, (n, n)).astype(dtype)
    # one untimed pass warms caches and the thread pool
    blocked_gemm(a, b, tile, workers=workers)
    return 2.0 * n**3 / _timed(lambda: blocked_gemm(a, b, tile, workers=workers), "blocked_gemm")


def measure_flops_add(elems: int, dtype=np.float32) -> float:
    x = np.ones(elems, dtype=dtype)
    y = np.ones(elems, dtype=dtype)
    out = np.empty_like(x)
    np.add(x, y, out=out)
    return elems / _timed(lambda: np.add(x, y, out=out), "streaming add")


def measure_beta(elems: int, dtype=np.float32) -> float:
    """Elements/s moved by a large copy, counting the read and the write."""
    src = np.ones(elems, dtype=dtype)
    dst = np.empty_like(src)
    np.copyto(dst, src)
    return 2.0 * elems / _timed(lambda: np.copyto(dst, src), "array copy")


def calibrate(
    samples: int = 3,
    sizes: CalibrationSizes | None = None,
    workers: int | None = None,
    tile: TileConfig | None = None,
    dtype=np.float32,
) -> HardwareProfile:
    """Median of ``samples`` runs for each profile field."""
    if samples < 3:
        raise ValueError("calibration needs at least 3 samples")
    sizes = sizes or CalibrationSizes()
    workers = workers or default_workers()
    muls: List[float] = []
    adds: List[float] = []
    betas: List[float] = []
    for _ in range(samples):
        muls.append(measure_flops_mul(sizes.gemm_n, workers, tile, dtype))
        adds.append(measure_flops_add(sizes.stream_elems, dtype))
        betas.append(measure_beta(sizes.stream_elems, dtype))
    return HardwareProfile(statistics.median(muls), statistics.median(adds), statistics.median(betas), workers)
