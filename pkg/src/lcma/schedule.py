"""Static assignment of (group, r) work items to a fixed pool of workers.

A *group* is the set of R tiles H_0[g] .. H_{R-1}[g] sharing one output
tile coordinate. Group-granular scheduling deals whole groups round-robin;
split-group scheduling re-cuts that same sequence into balanced per-worker
tile counts, so a group straddling a cut is divided between two workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .dense import ceil_div

WorkItem = Tuple[int, int]  # (group, r)


@dataclass(frozen=True)
class Split:
    group: int
    first_worker: int
    second_worker: int
    boundary_r: int  # first r held by second_worker


@dataclass
class TileSchedule:
    workers: int
    num_groups: int
    rank: int
    assignments: List[List[WorkItem]]
    splits: List[Split] = field(default_factory=list)
    balanced: bool = True

    @property
    def waves(self) -> int:
        return max((len(a) for a in self.assignments), default=0)

    @property
    def total_tiles(self) -> int:
        return self.num_groups * self.rank

    def loads(self) -> List[int]:
        return [len(a) for a in self.assignments]

    def owner_map(self) -> Dict[int, List[int]]:
        """group -> workers holding a portion of it, earlier portion first."""
        first_r: Dict[int, Dict[int, int]] = {}
        for w, items in enumerate(self.assignments):
            for g, r in items:
                held = first_r.setdefault(g, {})
                held[w] = min(r, held.get(w, r))
        return {g: sorted(held, key=held.get) for g, held in first_r.items()}

    def owners(self, group: int) -> List[int]:
        return self.owner_map().get(group, [])

    def rows(self) -> Iterable[Tuple[int, int, int, int]]:
        """(worker, wave, group, r) in worker-major order."""
        for w, items in enumerate(self.assignments):
            for wave, (g, r) in enumerate(items):
                yield w, wave, g, r


def group_granular_waves(num_groups: int, rank: int, workers: int) -> int:
    return ceil_div(num_groups, workers) * rank


def split_group_waves(num_groups: int, rank: int, workers: int) -> int:
    return ceil_div(num_groups * rank, workers)


def wave_waste(num_groups: int, rank: int, workers: int) -> float:
    """Fractional extra waves of group-granular over split-group scheduling."""
    split = split_group_waves(num_groups, rank, workers)
    return (group_granular_waves(num_groups, rank, workers) - split) / split


def _group_sequence(num_groups: int, workers: int) -> List[int]:
    # group-granular layout, flattened worker by worker
    return [g for w in range(workers) for g in range(w, num_groups, workers)]


def _cuts_clash(prev, cut, rank):
    """Both cuts fall strictly inside the same group of ``rank`` tiles."""
    return (prev % rank != 0) & (cut % rank != 0) & (prev // rank == cut // rank)


def _counts_ok(counts: Sequence[int], rank: int) -> bool:
    """True if cutting the tile sequence at ``counts`` leaves no group on 3+ workers."""
    cuts = np.cumsum(counts)[:-1]
    return not np.any(_cuts_clash(cuts[:-1], cuts[1:], rank))


def _balanced_counts(total: int, workers: int) -> List[int]:
    q, rem = divmod(total, workers)
    return [q + 1 if w < rem else q for w in range(workers)]


def _arranged_balanced_counts(total: int, workers: int, rank: int) -> List[int] | None:
    """Balanced counts in an order whose cuts keep every group on <= 2 workers.

    Each worker takes q or q+1 tiles. A DP over (worker, number of q+1
    shares so far) rejects any cut that lands in the interior of the same
    group as the previous cut. Returns None if no arrangement works.
    """
    q, rem = divmod(total, workers)
    if q == 0:
        return None
    u = np.arange(rem + 1)

    def ok(prev, cut):
        return ~_cuts_clash(prev, cut, rank)

    reach = u == 0
    took_extra = []  # per worker: reached state u via a q+1 share
    for w in range(workers):
        prev_cut = w * q + u
        cut = (w + 1) * q + u
        stay = reach & ok(prev_cut, cut)
        step = np.zeros_like(reach)
        step[1:] = reach[:-1] & ok(prev_cut[:-1], cut[1:])
        reach = stay | step
        reach &= rem - u <= workers - w - 1
        if not reach.any():
            return None
        took_extra.append(step & ~stay)
    if not reach[rem]:
        return None
    counts, state = [], rem
    for w in range(workers - 1, -1, -1):
        extra = int(took_extra[w][state])
        counts.append(q + extra)
        state -= extra
    return counts[::-1]


def balanced_split_feasible(num_groups: int, rank: int, workers: int) -> bool:
    """Whether a within-one balanced schedule exists with each group on <= 2 adjacent workers."""
    total = num_groups * rank
    return _counts_ok(_balanced_counts(total, workers), rank) or _arranged_balanced_counts(total, workers, rank) is not None


def _capacity_counts(total: int, workers: int, capacity: int) -> List[int]:
    full, left = divmod(total, capacity)
    counts = [capacity] * min(full, workers) + ([left] if left else [])
    return counts + [0] * (workers - len(counts))


def plan_split_group(num_groups: int, rank: int, workers: int) -> TileSchedule:
    """Spread ``num_groups * rank`` tiles over ``workers`` with group splitting.

    Per-worker counts are balanced to within one tile whenever some order of
    the q / q+1 shares leaves every group on at most two adjacent workers.
    Otherwise the smallest uniform capacity that keeps that rule is used
    and the schedule is marked unbalanced.
    """
    if min(num_groups, rank, workers) < 1:
        raise ValueError("num_groups, rank and workers must all be >= 1")
    total = num_groups * rank
    seq = _group_sequence(num_groups, workers)

    counts = _balanced_counts(total, workers)
    balanced = _counts_ok(counts, rank)
    if not balanced:
        arranged = _arranged_balanced_counts(total, workers, rank)
        if arranged is not None:
            counts, balanced = arranged, True
    if not balanced:
        capacity = ceil_div(total, workers)
        while not _counts_ok(_capacity_counts(total, workers, capacity), rank):
            capacity += 1
        counts = _capacity_counts(total, workers, capacity)

    assignments: List[List[WorkItem]] = []
    tiles = ((g, r) for g in seq for r in range(rank))
    for c in counts:
        assignments.append([next(tiles) for _ in range(c)])

    splits = []
    holder: Dict[int, int] = {}
    for w, items in enumerate(assignments):
        for g, r in items:
            first = holder.setdefault(g, w)
            if first != w and (g, r) == items[0]:
                splits.append(Split(g, first, w, r))
    return TileSchedule(workers, num_groups, rank, assignments, splits, balanced)


def r_alignment(schedule: TileSchedule) -> float:
    """Fraction of waves in which every active worker processes the same r."""
    waves = schedule.waves
    if waves == 0:
        return 1.0
    aligned = 0
    for wave in range(waves):
        rs = {items[wave][1] for items in schedule.assignments if len(items) > wave}
        aligned += len(rs) == 1
    return aligned / waves


def cache_aware_reorder(schedule: TileSchedule) -> TileSchedule:
    """Reorder each worker's items by (r, group) so concurrent waves share r.

    Only the order within a worker changes. If the reorder would lower the
    r-alignment of the input, the input order is kept.
    """
    reordered = TileSchedule(
        schedule.workers,
        schedule.num_groups,
        schedule.rank,
        [sorted(items, key=lambda it: (it[1], it[0])) for items in schedule.assignments],
        list(schedule.splits),
        schedule.balanced,
    )
    if r_alignment(reordered) < r_alignment(schedule):
        return TileSchedule(
            schedule.workers,
            schedule.num_groups,
            schedule.rank,
            [list(items) for items in schedule.assignments],
            list(schedule.splits),
            schedule.balanced,
        )
    return reordered


def write_schedule_csv(schedule: TileSchedule, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["worker", "wave", "group", "r"])
    writer.writerows(schedule.rows())
