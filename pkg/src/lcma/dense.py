"""Dense matrices, grid partitioning with zero padding, and baseline GEMMs."""

from __future__ import annotations

import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError

ELEMENT_KINDS = (np.dtype(np.float32), np.dtype(np.float64), np.dtype(np.int64))


def as_matrix(x, dtype=None) -> np.ndarray:
    """Coerce to a C-contiguous 2-D array of a supported element kind."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatchError(f"matrix extents must be >= 1, got {arr.shape}")
    if arr.dtype.kind in "iub":
        arr = arr.astype(np.int64, copy=False)
    elif arr.dtype not in ELEMENT_KINDS:
        arr = arr.astype(np.float64)
    return np.ascontiguousarray(arr)


def is_exact(arr: np.ndarray) -> bool:
    return arr.dtype.kind == "i"


def accumulator_dtype(dtype, wide: bool = False) -> np.dtype:
    dtype = np.dtype(dtype)
    if dtype.kind == "i":
        return np.dtype(np.int64)
    return np.dtype(np.float64) if wide else dtype


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass
class OpCounters:
    """Exact scalar operation and off-chip traffic tallies.

    ``loads`` and ``stores`` break traffic down by operand name
    ("A", "B", "At", "Bt", "H", "C").
    """

    scalar_multiplies: int = 0
    scalar_adds: int = 0
    loads: Counter = field(default_factory=Counter)
    stores: Counter = field(default_factory=Counter)

    @property
    def elements_loaded(self) -> int:
        return sum(self.loads.values())

    @property
    def elements_stored(self) -> int:
        return sum(self.stores.values())

    def load(self, operand: str, count: int) -> None:
        self.loads[operand] += int(count)

    def store(self, operand: str, count: int) -> None:
        self.stores[operand] += int(count)

    def merge(self, other: "OpCounters") -> "OpCounters":
        self.scalar_multiplies += other.scalar_multiplies
        self.scalar_adds += other.scalar_adds
        self.loads.update(other.loads)
        self.stores.update(other.stores)
        return self

    def reset(self) -> None:
        self.scalar_multiplies = 0
        self.scalar_adds = 0
        self.loads.clear()
        self.stores.clear()

    def copy(self) -> "OpCounters":
        return OpCounters(self.scalar_multiplies, self.scalar_adds, Counter(self.loads), Counter(self.stores))

    def __sub__(self, other: "OpCounters") -> "OpCounters":
        loads = Counter(self.loads)
        loads.subtract(other.loads)
        stores = Counter(self.stores)
        stores.subtract(other.stores)
        return OpCounters(
            self.scalar_multiplies - other.scalar_multiplies,
            self.scalar_adds - other.scalar_adds,
            Counter({k: v for k, v in loads.items() if v}),
            Counter({k: v for k, v in stores.items() if v}),
        )


class _NullCounters(OpCounters):
    """Sink used when the caller does not want tallies."""

    def load(self, operand, count):
        pass

    def store(self, operand, count):
        pass


def _counters(c: Optional[OpCounters]) -> OpCounters:
    return c if c is not None else _NullCounters()


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class GridView:
    """A matrix seen as a ``grid_rows x grid_cols`` grid of equal blocks.

    Blocks have ceiling extents; reads past the source edge return zero.
    """

    def __init__(self, src: np.ndarray, grid_rows: int, grid_cols: int):
        if grid_rows < 1 or grid_cols < 1:
            raise ValueError(f"grid dims must be >= 1, got ({grid_rows}, {grid_cols})")
        self.source_shape = src.shape
        self.grid = (grid_rows, grid_cols)
        rows, cols = src.shape
        self.block_shape = (ceil_div(rows, grid_rows), ceil_div(cols, grid_cols))
        pr, pc = self.block_shape[0] * grid_rows, self.block_shape[1] * grid_cols
        if (pr, pc) == src.shape:
            self.padded = src
        else:
            self.padded = np.zeros((pr, pc), dtype=src.dtype)
            self.padded[:rows, :cols] = src

    @property
    def dtype(self):
        return self.padded.dtype

    def block(self, i: int, l: int) -> np.ndarray:
        br, bc = self.block_shape
        return self.padded[i * br : (i + 1) * br, l * bc : (l + 1) * bc]

    def element(self, i: int, l: int, x: int, y: int):
        return self.block(i, l)[x, y]

    def valid_count(self, i: int, l: int) -> int:
        """Number of block elements that come from the source (not padding)."""
        br, bc = self.block_shape
        rows, cols = self.source_shape
        vr = max(0, min(br, rows - i * br))
        vc = max(0, min(bc, cols - l * bc))
        return vr * vc

    def blocks(self) -> np.ndarray:
        """All blocks as a (grid_rows, grid_cols, br, bc) view."""
        gr, gc = self.grid
        br, bc = self.block_shape
        return self.padded.reshape(gr, br, gc, bc).transpose(0, 2, 1, 3)


def pad_partition(src, grid_rows: int, grid_cols: int) -> GridView:
    return GridView(as_matrix(src), grid_rows, grid_cols)


def assemble(blocks: np.ndarray, out_shape: Tuple[int, int]) -> np.ndarray:
    """Inverse of partitioning: (gr, gc, br, bc) blocks -> cropped matrix."""
    gr, gc, br, bc = blocks.shape
    full = blocks.transpose(0, 2, 1, 3).reshape(gr * br, gc * bc)
    return np.ascontiguousarray(full[: out_shape[0], : out_shape[1]])


@dataclass(frozen=True)
class TileConfig:
    tile_m: int = 64
    tile_n: int = 64
    tile_k: int = 64

    def __post_init__(self):
        if min(self.tile_m, self.tile_n, self.tile_k) < 1:
            raise ValueError(f"tile extents must be >= 1, got {self}")

    @classmethod
    def parse(cls, text: str) -> "TileConfig":
        parts = [int(p) for p in text.replace("x", ",").split(",")]
        if len(parts) != 3:
            raise ValueError(f"tile must be 'm,n,k', got {text!r}")
        return cls(*parts)


def _check_inner(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")


def naive_gemm(a, b, counters: OpCounters | None = None, dtype=None) -> np.ndarray:
    """Reference product by explicit accumulation over the inner index.

    Accumulates in 64-bit (int64 for integer inputs, float64 otherwise)
    unless ``dtype`` is given. Each step is a rank-1 update, so no BLAS
    routine is involved.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    _check_inner(a, b)
    if dtype is None:
        dtype = np.int64 if (is_exact(a) and is_exact(b)) else np.float64
    a = a.astype(dtype, copy=False)
    b = b.astype(dtype, copy=False)
    M, K = a.shape
    N = b.shape[1]
    c = np.zeros((M, N), dtype=dtype)
    tmp = np.empty((M, N), dtype=dtype)
    for p in range(K):
        np.multiply(a[:, p, None], b[None, p, :], out=tmp)
        c += tmp
    cnt = _counters(counters)
    cnt.scalar_multiplies += M * N * K
    cnt.scalar_adds += M * N * (K - 1)
    cnt.load("A", M * K)
    cnt.load("B", K * N)
    cnt.store("C", M * N)
    return c


def _tile_ranges(extent: int, step: int) -> List[Tuple[int, int]]:
    return [(s, min(s + step, extent)) for s in range(0, extent, step)]


def blocked_gemm(
    a,
    b,
    tile: TileConfig | None = None,
    counters: OpCounters | None = None,
    workers: int | None = None,
    wide: bool = False,
    labels: Sequence[str] = ("A", "B", "C"),
) -> np.ndarray:
    """Tiled GEMM, parallel over disjoint output tiles.

    Output tiles are dealt round-robin to ``workers`` threads; each output
    element is written by exactly one worker. With ``wide`` the k-loop
    accumulates floats in 64-bit and the result is rounded once to the
    input precision.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    _check_inner(a, b)
    tile = tile or TileConfig()
    workers = workers or 1
    out_dtype = np.result_type(a.dtype, b.dtype)
    acc_dtype = accumulator_dtype(out_dtype, wide)
    M, K = a.shape
    N = b.shape[1]
    c = np.empty((M, N), dtype=out_dtype)

    rows = _tile_ranges(M, tile.tile_m)
    cols = _tile_ranges(N, tile.tile_n)
    ks = _tile_ranges(K, tile.tile_k)
    tiles = [(r, s) for r in rows for s in cols]

    if acc_dtype != a.dtype:
        a_acc = a.astype(acc_dtype)
    else:
        a_acc = a
    if acc_dtype != b.dtype:
        b_acc = b.astype(acc_dtype)
    else:
        b_acc = b

    def run(my_tiles):
        for (r0, r1), (s0, s1) in my_tiles:
            k0, k1 = ks[0]
            acc = a_acc[r0:r1, k0:k1] @ b_acc[k0:k1, s0:s1]
            for k0, k1 in ks[1:]:
                acc += a_acc[r0:r1, k0:k1] @ b_acc[k0:k1, s0:s1]
            c[r0:r1, s0:s1] = acc

    if workers <= 1 or len(tiles) <= 1:
        run(tiles)
    else:
        shares = [tiles[w::workers] for w in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run, s) for s in shares if s]:
                fut.result()

    cnt = _counters(counters)
    cnt.scalar_multiplies += M * N * K
    cnt.scalar_adds += M * N * (K - 1)
    cnt.load(labels[0], M * K)
    cnt.load(labels[1], K * N)
    cnt.store(labels[2], M * N)
    return c


# --------------------------------------------------------------------------- I/O and generation


def read_matrix(path, dtype=None) -> np.ndarray:
    """Text format: ``rows cols`` header, then one row per line."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or len(lines[0]) != 2:
        raise ValueError(f"{path}: first line must be 'rows cols'")
    rows, cols = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != rows or any(len(r) != cols for r in body):
        raise ValueError(f"{path}: expected {rows} rows of {cols} values")
    if dtype is None:
        exact = all("." not in t and "e" not in t.lower() and "n" not in t.lower() for r in body for t in r)
        dtype = np.int64 if exact else np.float64
    if np.dtype(dtype).kind == "i":
        return as_matrix(np.array([[int(t) for t in r] for r in body], dtype=np.int64))
    return as_matrix(np.array([[float(t) for t in r] for r in body], dtype=np.float64).astype(dtype))


def write_matrix(path, mat) -> None:
    mat = as_matrix(mat)
    fmt = "%d" if is_exact(mat) else "%.17g"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        np.savetxt(fh, mat, fmt=fmt, delimiter=" ")


def random_matrix(rows: int, cols: int, rng: np.random.Generator, dtype=np.float32, int_range: int = 8) -> np.ndarray:
    """Uniform in [-1, 1] for floats, uniform integers in [-int_range, int_range] otherwise."""
    dtype = np.dtype(dtype)
    if dtype.kind == "i":
        return rng.integers(-int_range, int_range + 1, size=(rows, cols), dtype=np.int64)
    return rng.uniform(-1.0, 1.0, size=(rows, cols)).astype(dtype)
