"""Bilinear matrix multiplication schemes and their exact verification.

A scheme ``<m, k, n, R, U, V, W>`` multiplies an ``m x k`` grid of blocks of
``A`` by a ``k x n`` grid of blocks of ``B`` using ``R`` block products::

    At_r = sum_{i,l} U[r,i,l] A_{i,l}
    Bt_r = sum_{l,j} V[r,l,j] B_{l,j}
    H_r  = At_r @ Bt_r
    C_ij = sum_r W[r,i,j] H_r
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import CoefficientRangeError, SchemeShapeError

COEFF_DTYPE = np.int8


def as_coeff_tensor(values, shape: Tuple[int, int, int] | None = None, label: str = "tensor") -> np.ndarray:
    """Return a read-only int8 copy of ``values`` after range/shape checks."""
    arr = np.asarray(values)
    if arr.ndim != 3:
        raise SchemeShapeError(f"{label} must be 3-D, got shape {arr.shape}")
    if shape is not None and tuple(arr.shape) != tuple(shape):
        raise SchemeShapeError(f"{label} has shape {arr.shape}, expected {tuple(shape)}")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
            raise CoefficientRangeError(f"{label} holds non-integer coefficients")
    elif arr.dtype.kind not in "iub":
        raise CoefficientRangeError(f"{label} has unsupported dtype {arr.dtype}")
    bad = (arr != -1) & (arr != 0) & (arr != 1)
    if np.any(bad):
        pos = tuple(int(p) for p in np.argwhere(bad)[0])
        raise CoefficientRangeError(f"{label}{list(pos)} = {arr[pos]} is outside {{-1, 0, 1}}")
    out = arr.astype(COEFF_DTYPE)
    out.setflags(write=False)
    return out


def nnz(t) -> int:
    """Number of nonzero coefficients."""
    return int(np.count_nonzero(t))


@dataclass(frozen=True, eq=False)
class LcmaScheme:
    m: int
    k: int
    n: int
    rank: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    name: str = "anonymous"

    def __post_init__(self):
        for label, val in (("m", self.m), ("k", self.k), ("n", self.n), ("rank", self.rank)):
            if int(val) < 1:
                raise SchemeShapeError(f"{label} must be >= 1, got {val}")
        r, m, k, n = self.rank, self.m, self.k, self.n
        object.__setattr__(self, "u", as_coeff_tensor(self.u, (r, m, k), "U"))
        object.__setattr__(self, "v", as_coeff_tensor(self.v, (r, k, n), "V"))
        object.__setattr__(self, "w", as_coeff_tensor(self.w, (r, m, n), "W"))

    @property
    def grid(self) -> Tuple[int, int, int]:
        return (self.m, self.k, self.n)

    @property
    def nnz(self) -> Tuple[int, int, int]:
        return (nnz(self.u), nnz(self.v), nnz(self.w))

    @property
    def is_lower_complexity(self) -> bool:
        return self.rank < self.m * self.k * self.n

    def renamed(self, name: str) -> "LcmaScheme":
        return LcmaScheme(self.m, self.k, self.n, self.rank, self.u, self.v, self.w, name)

    def same_tensors(self, other: "LcmaScheme") -> bool:
        return (
            self.grid == other.grid
            and self.rank == other.rank
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.w, other.w)
        )

    def __repr__(self):
        return f"LcmaScheme({self.name!r}, <{self.m},{self.k},{self.n}>, R={self.rank})"


@dataclass(frozen=True)
class IdentityFailure:
    # (i, i', l, l', j, j'), zero-based
    index: Tuple[int, int, int, int, int, int]
    observed: int
    expected: int


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    failures: List[IdentityFailure] = field(default_factory=list)
    checked_count: int = 0


def identity_tensor(scheme: LcmaScheme) -> np.ndarray:
    """T[i,i',l,l',j,j'] = sum_r W[r,i,j] U[r,i',l] V[r,l',j'] in int64."""
    w = scheme.w.astype(np.int64)
    u = scheme.u.astype(np.int64)
    v = scheme.v.astype(np.int64)
    return np.einsum("rij,rpl,rqs->iplqjs", w, u, v)


def validate_scheme(scheme: LcmaScheme) -> ValidationReport:
    """Check the bilinear matmul identity over all m^2 k^2 n^2 index tuples.

    The coefficient of ``A[i',l] B[l',j']`` in ``C[i,j]`` must be
    ``[i == i'] [l == l'] [j == j']``.
    """
    m, k, n = scheme.grid
    observed = identity_tensor(scheme)
    expected = np.einsum(
        "ip,lq,js->iplqjs",
        np.eye(m, dtype=np.int64),
        np.eye(k, dtype=np.int64),
        np.eye(n, dtype=np.int64),
    )
    bad = np.argwhere(observed != expected)
    failures = [
        IdentityFailure(tuple(int(x) for x in idx), int(observed[tuple(idx)]), int(expected[tuple(idx)]))
        for idx in bad
    ]
    return ValidationReport(valid=not failures, failures=failures, checked_count=int(observed.size))


def standard_scheme(m: int, k: int, n: int) -> LcmaScheme:
    """The classical rank-mkn decomposition, one product per (i, l, j)."""
    if min(m, k, n) < 1:
        raise SchemeShapeError(f"grid dims must be >= 1, got ({m}, {k}, {n})")
    rank = m * k * n
    u = np.zeros((rank, m, k), dtype=COEFF_DTYPE)
    v = np.zeros((rank, k, n), dtype=COEFF_DTYPE)
    w = np.zeros((rank, m, n), dtype=COEFF_DTYPE)
    r = 0
    for i in range(m):
        for l in range(k):
            for j in range(n):
                u[r, i, l] = 1
                v[r, l, j] = 1
                w[r, i, j] = 1
                r += 1
    return LcmaScheme(m, k, n, rank, u, v, w, name=f"standard-{m}x{k}x{n}-r{rank}")


def _kron_factor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ra, pa, qa = a.shape
    rb, pb, qb = b.shape
    out = np.einsum("rab,scd->rsacbd", a.astype(np.int64), b.astype(np.int64))
    return out.reshape(ra * rb, pa * pb, qa * qb)


def compose(outer: LcmaScheme, inner: LcmaScheme, name: str | None = None) -> LcmaScheme:
    """Tensor product of two schemes.

    The composed grid index is ``outer * inner_extent + inner`` on every axis,
    and the composed rank index is ``r_outer * inner.rank + r_inner``.
    """
    u = _kron_factor(outer.u, inner.u)
    v = _kron_factor(outer.v, inner.v)
    w = _kron_factor(outer.w, inner.w)
    for t in (u, v, w):
        assert np.all(np.abs(t) <= 1), "product of {-1,0,1} coefficients left the set"
    return LcmaScheme(
        outer.m * inner.m,
        outer.k * inner.k,
        outer.n * inner.n,
        outer.rank * inner.rank,
        u,
        v,
        w,
        name=name or f"{outer.name}*{inner.name}",
    )
