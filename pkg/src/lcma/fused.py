"""Fused group-parallel LCMA executor.

Stage 1/2 (group combines) read every source element once and emit all R
combined elements for that coordinate. Stage 3/4 runs (group, r) work items
on a fixed worker pool: each item accumulates one H_r tile in a worker-local
buffer and folds it straight into worker-local C tiles, so H never reaches
shared memory. A group split across two workers leaves two partial C tiles
that are summed first-portion-first once both workers are done.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dense import (
    GridView,
    OpCounters,
    _counters,
    _tile_ranges,
    accumulator_dtype,
    as_matrix,
    ceil_div,
    default_workers,
    pad_partition,
)
from .errors import DimensionMismatchError
from .schedule import TileSchedule, cache_aware_reorder, plan_split_group
from .scheme import LcmaScheme

# rows of the combined block handled per group-combine task
COMBINE_ROW_CHUNK = 64


@dataclass(frozen=True)
class GroupCoord:
    kind: str  # "A" (x, y), "B" (y, z) or "H" (x, z)
    first: int
    second: int


@dataclass
class PrecombinedB:
    """Combined B operands kept for reuse across many A inputs."""

    scheme: LcmaScheme
    source_shape: Tuple[int, int]
    b_tilde: np.ndarray  # (R, ceil(K/k), ceil(N/n))


@dataclass
class ExecConfig:
    tile_m: int = 64
    tile_n: int = 64
    tile_k: int = 64
    workers: int = field(default_factory=default_workers)
    cache_aware: bool = False
    precombined_b: Optional[PrecombinedB] = None
    wide: bool = False

    def __post_init__(self):
        if min(self.tile_m, self.tile_n, self.tile_k) < 1:
            raise ValueError("tile extents must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def _run_parallel(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _group_combine(grid: GridView, coeffs: np.ndarray, counters, src_label, dst_label, workers):
    rank, p, q = coeffs.shape
    if grid.grid != (p, q):
        raise DimensionMismatchError(f"grid {grid.grid} does not match scheme factor {p}x{q}")
    br, bc = grid.block_shape
    blocks = grid.blocks()
    out = np.empty((rank, br, bc), dtype=grid.dtype)
    terms = [[(int(coeffs[r, i, l]), i, l) for i, l in np.argwhere(coeffs[r])] for r in range(rank)]

    def chunk(rows):
        x0, x1 = rows
        local = blocks[:, :, x0:x1, :].copy()  # every source element of the chunk, loaded once
        for r, tr in enumerate(terms):
            dst = out[r, x0:x1]
            if not tr:
                dst[...] = 0
                continue
            c0, i0, l0 = tr[0]
            if c0 > 0:
                dst[...] = local[i0, l0]
            else:
                np.negative(local[i0, l0], out=dst)
            for c, i, l in tr[1:]:
                if c > 0:
                    dst += local[i, l]
                else:
                    dst -= local[i, l]

    _run_parallel(chunk, _tile_ranges(br, COMBINE_ROW_CHUNK), workers)

    cnt = _counters(counters)
    cnt.scalar_adds += sum(max(len(t) - 1, 0) for t in terms) * br * bc
    cnt.load(src_label, grid.source_shape[0] * grid.source_shape[1])
    cnt.store(dst_label, rank * br * bc)
    return out


def group_combine_a(a_grid: GridView, scheme: LcmaScheme, counters: OpCounters | None = None, workers: int = 1):
    """All R combined A blocks, as an (R, ceil(M/m), ceil(K/k)) array."""
    return _group_combine(a_grid, scheme.u, counters, "A", "At", workers)


def group_combine_b(b_grid: GridView, scheme: LcmaScheme, counters: OpCounters | None = None, workers: int = 1):
    return _group_combine(b_grid, scheme.v, counters, "B", "Bt", workers)


def precombine_b(b, scheme: LcmaScheme, workers: int = 1) -> PrecombinedB:
    b = as_matrix(b)
    grid = pad_partition(b, scheme.k, scheme.n)
    return PrecombinedB(scheme, b.shape, group_combine_b(grid, scheme, None, workers))


def h_group_count(block_rows: int, block_cols: int, config: ExecConfig) -> int:
    return ceil_div(block_rows, config.tile_m) * ceil_div(block_cols, config.tile_n)


def fused_gemm_combine_h(
    a_tilde: np.ndarray,
    b_tilde: np.ndarray,
    scheme: LcmaScheme,
    schedule: TileSchedule,
    config: ExecConfig,
    out_shape: Tuple[int, int],
    counters: OpCounters | None = None,
) -> np.ndarray:
    """Fused GEMM + Combine H over a precomputed tile schedule."""
    rank = scheme.rank
    m, n = scheme.m, scheme.n
    if a_tilde.shape[0] != rank or b_tilde.shape[0] != rank:
        raise DimensionMismatchError("combined operands do not match scheme rank")
    _, bm, bk = a_tilde.shape
    if b_tilde.shape[1] != bk:
        raise DimensionMismatchError(f"combined inner extents differ: {a_tilde.shape} vs {b_tilde.shape}")
    bn = b_tilde.shape[2]
    if m * bm < out_shape[0] or n * bn < out_shape[1]:
        raise DimensionMismatchError(f"combined blocks cannot cover output {out_shape}")

    x_tiles = _tile_ranges(bm, config.tile_m)
    z_tiles = _tile_ranges(bn, config.tile_n)
    k_tiles = _tile_ranges(bk, config.tile_k)
    num_groups = len(x_tiles) * len(z_tiles)
    if schedule.num_groups != num_groups or schedule.rank != rank:
        raise DimensionMismatchError(
            f"schedule covers {schedule.num_groups} groups x R={schedule.rank}, "
            f"operands need {num_groups} x R={rank}"
        )

    out_dtype = np.result_type(a_tilde.dtype, b_tilde.dtype)
    acc = accumulator_dtype(out_dtype, config.wide)
    at = a_tilde if a_tilde.dtype == acc else a_tilde.astype(acc)
    bt = b_tilde if b_tilde.dtype == acc else b_tilde.astype(acc)
    w_terms = [[(int(scheme.w[r, i, j]), i, j) for i, j in np.argwhere(scheme.w[r])] for r in range(rank)]

    def worker(items):
        local = OpCounters()
        partial: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        for g, r in items:
            (x0, x1), (z0, z1) = x_tiles[g // len(z_tiles)], z_tiles[g % len(z_tiles)]
            k0, k1 = k_tiles[0]
            h = at[r, x0:x1, k0:k1] @ bt[r, k0:k1, z0:z1]
            for k0, k1 in k_tiles[1:]:
                h += at[r, x0:x1, k0:k1] @ bt[r, k0:k1, z0:z1]
            elems = (x1 - x0) * (z1 - z0)
            local.scalar_multiplies += elems * bk
            local.scalar_adds += elems * (bk - 1)
            if g not in partial:
                partial[g] = (np.zeros((m, n, x1 - x0, z1 - z0), dtype=acc), np.zeros((m, n), dtype=bool))
            buf, touched = partial[g]
            for c, i, j in w_terms[r]:
                if touched[i, j]:
                    local.scalar_adds += elems
                    if c > 0:
                        buf[i, j] += h
                    else:
                        buf[i, j] -= h
                else:
                    touched[i, j] = True
                    if c > 0:
                        buf[i, j] = h
                    else:
                        np.negative(h, out=buf[i, j])
        return partial, local

    results = _run_parallel(worker, schedule.assignments, config.workers)

    cnt = _counters(counters)
    c_full = np.zeros((m * bm, n * bn), dtype=out_dtype)
    owner_map = schedule.owner_map()
    for g in range(num_groups):
        owners = owner_map[g]
        buf, touched = results[owners[0]][0][g]
        if len(owners) > 1:
            buf = buf.copy()
            touched = touched.copy()
            for w in owners[1:]:
                other, other_touched = results[w][0][g]
                both = touched & other_touched
                cnt.scalar_adds += int(both.sum()) * other.shape[2] * other.shape[3]
                for i, j in np.argwhere(other_touched):
                    if touched[i, j]:
                        buf[i, j] += other[i, j]
                    else:
                        buf[i, j] = other[i, j]
                touched = touched | other_touched
        (x0, x1), (z0, z1) = x_tiles[g // len(z_tiles)], z_tiles[g % len(z_tiles)]
        for i in range(m):
            for j in range(n):
                c_full[i * bm + x0 : i * bm + x1, j * bn + z0 : j * bn + z1] = buf[i, j]
    for _, local in results:
        cnt.merge(local)
    cnt.load("At", rank * bm * bk)
    cnt.load("Bt", rank * bk * bn)
    cnt.store("C", out_shape[0] * out_shape[1])
    return np.ascontiguousarray(c_full[: out_shape[0], : out_shape[1]])


def lcma_fused(
    a,
    b,
    scheme: LcmaScheme,
    config: ExecConfig | None = None,
    counters: OpCounters | None = None,
    return_schedule: bool = False,
):
    """Group combines (or cached combined B), split-group plan, fused stage 3/4."""
    config = config or ExecConfig()
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")
    pre = config.precombined_b
    if pre is not None:
        if not pre.scheme.same_tensors(scheme):
            raise DimensionMismatchError(f"precombined B was built for {pre.scheme.name}, not {scheme.name}")
        if pre.source_shape != b.shape:
            raise DimensionMismatchError(f"precombined B has shape {pre.source_shape}, got {b.shape}")
    dtype = np.result_type(a.dtype, b.dtype if pre is None else pre.b_tilde.dtype)
    a_grid = pad_partition(a.astype(dtype, copy=False), scheme.m, scheme.k)
    a_tilde = group_combine_a(a_grid, scheme, counters, config.workers)
    if pre is not None:
        b_tilde = pre.b_tilde.astype(dtype, copy=False)
    else:
        b_grid = pad_partition(b.astype(dtype, copy=False), scheme.k, scheme.n)
        b_tilde = group_combine_b(b_grid, scheme, counters, config.workers)
    if a_tilde.shape[2] != b_tilde.shape[1]:
        raise DimensionMismatchError(f"combined inner extents differ: {a_tilde.shape} vs {b_tilde.shape}")

    groups = h_group_count(a_tilde.shape[1], b_tilde.shape[2], config)
    schedule = plan_split_group(groups, scheme.rank, config.workers)
    if config.cache_aware:
        schedule = cache_aware_reorder(schedule)
    c = fused_gemm_combine_h(a_tilde, b_tilde, scheme, schedule, config, (a.shape[0], b.shape[1]), counters)
    if return_schedule:
        return c, schedule
    return c
