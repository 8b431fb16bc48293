"""Analytical cost model and algorithm selection.

Each stage is costed as ``max(flops / throughput, mem_elements / beta)`` and
stage times are summed without overlap. LCMA terms use ceiling block extents
(``bm = ceil(M/m)`` etc.), which reduce to the plain quotients for divisible
shapes; the standard GEMM uses the true M, N, K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Union

from .dense import ceil_div, default_workers
from .errors import ProfileFormatError
from .scheme import LcmaScheme

STANDARD_GEMM = "StandardGemm"

_PROFILE_KEYS = ("flops_mul", "flops_add", "beta_elems", "workers")


class Stage(str, Enum):
    COMBINE_A = "CombineA"
    COMBINE_B = "CombineB"
    GEMM = "Gemm"
    COMBINE_H = "CombineH"
    STD_GEMM = "StdGemm"


@dataclass(frozen=True)
class HardwareProfile:
    """Multiply throughput, add throughput (FLOP/s) and bandwidth (elements/s)."""

    flops_mul: float
    flops_add: float
    beta: float
    workers: int = 1

    def __post_init__(self):
        for name in ("flops_mul", "flops_add", "beta"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive finite number, got {val!r}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError(f"workers must be a positive integer, got {self.workers!r}")

    @property
    def ridge(self) -> float:
        """flops_mul / beta, the intensity at which the GEMM stage turns compute-bound."""
        return self.flops_mul / self.beta

    def to_text(self) -> str:
        return (
            f"flops_mul={self.flops_mul!r}\n"
            f"flops_add={self.flops_add!r}\n"
            f"beta_elems={self.beta!r}\n"
            f"workers={int(self.workers)}\n"
        )

    @classmethod
    def from_text(cls, text: str, path=None) -> "HardwareProfile":
        where = f"{path}: " if path else ""
        values: Dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep or key not in _PROFILE_KEYS:
                raise ProfileFormatError(f"{where}line {lineno}: expected one of {', '.join(_PROFILE_KEYS)} as key=value")
            if key in values:
                raise ProfileFormatError(f"{where}line {lineno}: duplicate key {key!r}")
            values[key] = val.strip()
        missing = [k for k in _PROFILE_KEYS[:3] if k not in values]
        if missing:
            raise ProfileFormatError(f"{where}missing keys: {', '.join(missing)}")
        try:
            return cls(
                float(values["flops_mul"]),
                float(values["flops_add"]),
                float(values["beta_elems"]),
                int(values.get("workers", default_workers())),
            )
        except ValueError as exc:
            raise ProfileFormatError(f"{where}{exc}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "HardwareProfile":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ProfileFormatError(f"cannot read profile {path}: {exc.strerror}") from None
        return cls.from_text(text, path)


def beta_from_bytes(bytes_per_sec: float, itemsize: int) -> float:
    """Convert a byte bandwidth to elements/s for one element width."""
    if itemsize < 1:
        raise ValueError("itemsize must be >= 1")
    return bytes_per_sec / itemsize


@dataclass(frozen=True)
class StageCost:
    stage: Stage
    flops: int
    mem_elements: int
    throughput: float  # FLOP/s of the unit doing this stage's arithmetic
    beta: float

    @property
    def intensity(self) -> Fraction:
        if self.mem_elements == 0:
            return Fraction(0) if self.flops == 0 else Fraction(10**18)
        return Fraction(self.flops, self.mem_elements)

    @property
    def compute_seconds(self) -> float:
        return self.flops / self.throughput

    @property
    def memory_seconds(self) -> float:
        return self.mem_elements / self.beta

    @property
    def bound(self) -> str:
        return "compute" if self.compute_seconds > self.memory_seconds else "memory"

    @property
    def time_seconds(self) -> float:
        return max(self.compute_seconds, self.memory_seconds)


@dataclass
class Decision:
    choice: str
    predicted_time: Dict[str, float] = field(default_factory=dict)
    predicted_speedup: float = 1.0
    fused: bool = True
    memory_bound: bool = False


Candidate = Union[LcmaScheme, str]


def _check_dims(M: int, N: int, K: int) -> None:
    if min(M, N, K) < 1:
        raise ValueError(f"dimensions must be >= 1, got M={M}, N={N}, K={K}")


def gemm_intensity(M: int, N: int, K: int) -> Fraction:
    """2MNK / (MK + NK + MN), exact."""
    _check_dims(M, N, K)
    return Fraction(2 * M * N * K, M * K + N * K + M * N)


def std_gemm_memory_bound(M: int, N: int, K: int, hw: HardwareProfile) -> bool:
    return gemm_intensity(M, N, K) <= Fraction(hw.flops_mul) / Fraction(hw.beta)


def _blocks(scheme: LcmaScheme, M: int, N: int, K: int):
    return ceil_div(M, scheme.m), ceil_div(N, scheme.n), ceil_div(K, scheme.k)


def _mem_terms(scheme: LcmaScheme, M: int, N: int, K: int, fused: bool):
    bm, bn, bk = _blocks(scheme, M, N, K)
    R = scheme.rank
    mem_a = M * K + R * bm * bk
    mem_b = N * K + R * bk * bn
    if fused:
        mem_gemm = R * (bm * bk + bk * bn) + M * N
        mem_h = M * N
    else:
        mem_gemm = R * (bm * bk + bk * bn + bm * bn)
        mem_h = M * N + R * bm * bn
    return mem_a, mem_b, mem_gemm, mem_h


def stage_costs(scheme: LcmaScheme, M: int, N: int, K: int, hw: HardwareProfile, fused: bool = True) -> List[StageCost]:
    """Combine A, Combine B, GEMM and Combine H costs for one shape."""
    _check_dims(M, N, K)
    bm, bn, bk = _blocks(scheme, M, N, K)
    R = scheme.rank
    nu, nv, nw = scheme.nnz
    mem_a, mem_b, mem_gemm, mem_h = _mem_terms(scheme, M, N, K, fused)
    return [
        StageCost(Stage.COMBINE_A, (nu - R) * bm * bk, mem_a, hw.flops_add, hw.beta),
        StageCost(Stage.COMBINE_B, (nv - R) * bk * bn, mem_b, hw.flops_add, hw.beta),
        StageCost(Stage.GEMM, 2 * R * bm * bn * bk, mem_gemm, hw.flops_mul, hw.beta),
        StageCost(Stage.COMBINE_H, (nw - scheme.m * scheme.n) * bm * bn, mem_h, hw.flops_add, hw.beta),
    ]


def std_gemm_cost(M: int, N: int, K: int, hw: HardwareProfile) -> StageCost:
    _check_dims(M, N, K)
    return StageCost(Stage.STD_GEMM, 2 * M * N * K, M * K + N * K + M * N, hw.flops_mul, hw.beta)


def benefit_lhs(scheme: LcmaScheme, M: int, N: int, K: int, fused: bool = True) -> Fraction:
    """FLOPs saved in the GEMM stage per element of combine-stage traffic."""
    _check_dims(M, N, K)
    bm, bn, bk = _blocks(scheme, M, N, K)
    mem_a, mem_b, _, mem_h = _mem_terms(scheme, M, N, K, fused)
    saved = 2 * M * N * K - 2 * scheme.rank * bm * bn * bk
    return Fraction(saved, mem_a + mem_b + mem_h)


def lcma_beneficial(scheme: LcmaScheme, M: int, N: int, K: int, hw: HardwareProfile, fused: bool = True) -> bool:
    if scheme.rank >= scheme.m * scheme.k * scheme.n:
        return False
    return benefit_lhs(scheme, M, N, K, fused) > Fraction(hw.flops_mul) / Fraction(hw.beta)


def estimate_time(candidate: Candidate, M: int, N: int, K: int, hw: HardwareProfile, fused: bool = True) -> float:
    """Predicted seconds for a scheme, or for the standard GEMM when given ``STANDARD_GEMM``."""
    if isinstance(candidate, str):
        if candidate != STANDARD_GEMM:
            raise ValueError(f"unknown candidate {candidate!r}")
        return std_gemm_cost(M, N, K, hw).time_seconds
    return sum(s.time_seconds for s in stage_costs(candidate, M, N, K, hw, fused))


def select(catalog: Iterable[LcmaScheme], M: int, N: int, K: int, hw: HardwareProfile, fused: bool = True) -> Decision:
    """Fastest predicted algorithm, falling back to the standard GEMM.

    Ties go to the standard GEMM, then to the lexicographically smallest name.
    """
    schemes = list(catalog)
    std_time = estimate_time(STANDARD_GEMM, M, N, K, hw)
    if std_gemm_memory_bound(M, N, K, hw):
        return Decision(STANDARD_GEMM, {STANDARD_GEMM: std_time}, 1.0, fused, memory_bound=True)
    times = {STANDARD_GEMM: std_time}
    for s in schemes:
        times[s.name] = estimate_time(s, M, N, K, hw, fused)
    ranked = sorted(times, key=lambda name: (times[name], name != STANDARD_GEMM, name))
    choice = ranked[0]
    return Decision(choice, times, std_time / times[choice], fused)


def compute_ceiling(candidate: Candidate, hw: HardwareProfile) -> float:
    """Effective-FLOPS ceiling: flops_mul scaled by mnk / R."""
    if isinstance(candidate, str):
        return hw.flops_mul
    return hw.flops_mul * candidate.m * candidate.k * candidate.n / candidate.rank


def default_intensity_grid(lo: float = 1.0, hi: float = 1e5, points: int = 61) -> List[float]:
    step = (math.log10(hi) - math.log10(lo)) / (points - 1)
    return [10 ** (math.log10(lo) + i * step) for i in range(points)]


def square_for_intensity(intensity: float) -> int:
    """Square size N whose GEMM intensity 2N/3 is closest to ``intensity``."""
    return max(1, round(1.5 * intensity))


@dataclass(frozen=True)
class RooflineRow:
    intensity: float
    algorithm: str
    effective_flops: float


def roofline_table(
    schemes: Sequence[LcmaScheme],
    hw: HardwareProfile,
    intensities: Sequence[float] | None = None,
    fused: bool = True,
) -> List[RooflineRow]:
    """Effective FLOPS (2N^3 over predicted time) per algorithm, per intensity.

    Each intensity is realized by a square shape; a ``best:<name>`` row per
    intensity records what ``select`` picks at that shape.
    """
    rows: List[RooflineRow] = []
    for intensity in intensities if intensities is not None else default_intensity_grid():
        n = square_for_intensity(intensity)
        real = float(gemm_intensity(n, n, n))
        work = 2.0 * n**3
        rows.append(RooflineRow(real, STANDARD_GEMM, work / estimate_time(STANDARD_GEMM, n, n, n, hw)))
        for s in schemes:
            rows.append(RooflineRow(real, s.name, work / estimate_time(s, n, n, n, hw, fused)))
        best = select(schemes, n, n, n, hw, fused)
        rows.append(RooflineRow(real, f"best:{best.choice}", work / best.predicted_time[best.choice]))
    return rows


def crossover(
    base: Candidate,
    challenger: Candidate,
    hw: HardwareProfile,
    intensities: Sequence[float] | None = None,
    fused: bool = True,
) -> Optional[float]:
    """First grid intensity from which ``challenger`` stays faster than ``base``."""
    grid = list(intensities if intensities is not None else default_intensity_grid())
    found: Optional[float] = None
    for intensity in grid:
        n = square_for_intensity(intensity)
        ahead = estimate_time(challenger, n, n, n, hw, fused) < estimate_time(base, n, n, n, hw, fused)
        if ahead and found is None:
            found = float(gemm_intensity(n, n, n))
        elif not ahead:
            found = None
    return found
