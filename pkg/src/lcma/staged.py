"""Four-stage LCMA workflow with every intermediate materialized.

Stages run in order (Combine A, Combine B, GEMM, Combine H) with a barrier
between them. This path is the semantic reference for the fused executor
and the source of per-stage operation counts.

Traffic is tallied the way the staged loops touch memory: each nonzero
coefficient reloads its source block, each intermediate is stored once.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .dense import GridView, OpCounters, TileConfig, _counters, as_matrix, blocked_gemm, pad_partition
from .errors import DimensionMismatchError
from .scheme import LcmaScheme


@dataclass
class IntermediateSet:
    a_tilde: List[np.ndarray] = field(default_factory=list)
    b_tilde: List[np.ndarray] = field(default_factory=list)
    h: List[np.ndarray] = field(default_factory=list)


def _linear_combination(terms, shape, dtype):
    """sum of coeff * block over terms; the first term is an assignment."""
    if not terms:
        return np.zeros(shape, dtype=dtype)
    (c0, b0), rest = terms[0], terms[1:]
    out = b0.copy() if c0 > 0 else np.negative(b0)
    for coeff, blk in rest:
        if coeff > 0:
            out += blk
        else:
            out -= blk
    return out


def _map(fn, items, workers):
    if not workers or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _combine(grid: GridView, coeffs: np.ndarray, counters, src_label, dst_label, workers):
    rank, p, q = coeffs.shape
    if grid.grid != (p, q):
        raise DimensionMismatchError(f"grid {grid.grid} does not match scheme factor {p}x{q}")
    shape = grid.block_shape
    block_elems = shape[0] * shape[1]
    cnt = _counters(counters)

    def one(r):
        nz = np.argwhere(coeffs[r])
        terms = [(int(coeffs[r, i, l]), grid.block(i, l)) for i, l in nz]
        return _linear_combination(terms, shape, grid.dtype), nz

    results = _map(one, list(range(rank)), workers)
    out = []
    for tilde, nz in results:
        out.append(tilde)
        if len(nz):
            cnt.scalar_adds += (len(nz) - 1) * block_elems
        cnt.load(src_label, sum(grid.valid_count(int(i), int(l)) for i, l in nz))
        cnt.store(dst_label, block_elems)
    return out


def combine_a(a_grid: GridView, scheme: LcmaScheme, counters: OpCounters | None = None, workers=None):
    """At_r = sum_{i,l} U[r,i,l] A_{i,l}, skipping zero coefficients."""
    return _combine(a_grid, scheme.u, counters, "A", "At", workers)


def combine_b(b_grid: GridView, scheme: LcmaScheme, counters: OpCounters | None = None, workers=None):
    """Bt_r = sum_{l,j} V[r,l,j] B_{l,j}."""
    return _combine(b_grid, scheme.v, counters, "B", "Bt", workers)


def batched_gemm(
    inter: IntermediateSet,
    counters: OpCounters | None = None,
    tile: TileConfig | None = None,
    workers=None,
    wide: bool = False,
) -> IntermediateSet:
    """H_r = At_r @ Bt_r for every r. H is stored at the input precision."""
    if len(inter.a_tilde) != len(inter.b_tilde):
        raise DimensionMismatchError("a_tilde and b_tilde differ in length")
    inter.h = [
        blocked_gemm(at, bt, tile, counters, workers=workers, wide=wide, labels=("At", "Bt", "H"))
        for at, bt in zip(inter.a_tilde, inter.b_tilde)
    ]
    return inter


def combine_h(
    h: List[np.ndarray],
    scheme: LcmaScheme,
    out_shape: Tuple[int, int],
    counters: OpCounters | None = None,
    workers=None,
) -> np.ndarray:
    """C_ij = sum_r W[r,i,j] H_r, assembled and cropped to ``out_shape``."""
    if len(h) != scheme.rank:
        raise DimensionMismatchError(f"expected {scheme.rank} H matrices, got {len(h)}")
    m, n = scheme.m, scheme.n
    bm, bn = h[0].shape
    if m * bm < out_shape[0] or n * bn < out_shape[1]:
        raise DimensionMismatchError(f"H blocks {h[0].shape} cannot cover output {out_shape}")
    cnt = _counters(counters)
    c = np.empty((m * bm, n * bn), dtype=h[0].dtype)
    pairs = [(i, j) for i in range(m) for j in range(n)]

    def one(ij):
        i, j = ij
        rs = np.flatnonzero(scheme.w[:, i, j])
        terms = [(int(scheme.w[r, i, j]), h[r]) for r in rs]
        c[i * bm : (i + 1) * bm, j * bn : (j + 1) * bn] = _linear_combination(terms, (bm, bn), c.dtype)
        return len(rs)

    counts = _map(one, pairs, workers)
    for used in counts:
        if used:
            cnt.scalar_adds += (used - 1) * bm * bn
        cnt.load("H", used * bm * bn)
    cnt.store("C", out_shape[0] * out_shape[1])
    return np.ascontiguousarray(c[: out_shape[0], : out_shape[1]])


def lcma_staged(
    a,
    b,
    scheme: LcmaScheme,
    counters: OpCounters | None = None,
    tile: TileConfig | None = None,
    workers=None,
    wide: bool = False,
    return_intermediates: bool = False,
):
    """Run the four stages with materialized intermediates.

    With ``wide`` each H_r is accumulated in 64-bit and then rounded to the
    input precision when stored, so Combine H works on rounded values.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")
    dtype = np.result_type(a.dtype, b.dtype)
    a_grid = pad_partition(a.astype(dtype, copy=False), scheme.m, scheme.k)
    b_grid = pad_partition(b.astype(dtype, copy=False), scheme.k, scheme.n)
    inter = IntermediateSet()
    inter.a_tilde = combine_a(a_grid, scheme, counters, workers)
    inter.b_tilde = combine_b(b_grid, scheme, counters, workers)
    batched_gemm(inter, counters, tile, workers, wide)
    c = combine_h(inter.h, scheme, (a.shape[0], b.shape[1]), counters, workers)
    if return_intermediates:
        return c, inter
    return c
