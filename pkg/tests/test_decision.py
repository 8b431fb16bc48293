import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcma.decision import (
    STANDARD_GEMM,
    HardwareProfile,
    Stage,
    beta_from_bytes,
    compute_ceiling,
    crossover,
    estimate_time,
    gemm_intensity,
    lcma_beneficial,
    roofline_table,
    select,
    square_for_intensity,
    stage_costs,
    std_gemm_memory_bound,
)
from lcma.dense import OpCounters, pad_partition
from lcma.errors import ProfileFormatError
from lcma.fused import ExecConfig, group_combine_a, group_combine_b, lcma_fused
from lcma.library import LADERMAN, STANDARD_222, STRASSEN, STRASSEN2, builtin_catalog
from lcma.staged import IntermediateSet, batched_gemm, combine_a, combine_b, combine_h

RATIO100 = HardwareProfile(100e12, 100e12, 1e12)


def table_closed_forms(s, M, N, K, fused):
    """Table cells written out directly with exact quotients."""
    m, k, n, R = s.m, s.k, s.n, s.rank
    nu, nv, nw = s.nnz
    flops = [
        (nu - R) * F(M, m) * F(K, k),
        (nv - R) * F(N, n) * F(K, k),
        2 * R * F(M * N * K, m * n * k),
        (nw - m * n) * F(M, m) * F(N, n),
    ]
    mem = [
        M * K * (1 + F(R, m * k)),
        N * K * (1 + F(R, n * k)),
        R * (F(M * K, m * k) + F(N * K, n * k) + F(M * N, m * n)),
        M * N * (1 + F(R, m * n)),
    ]
    if fused:
        mem[2] = R * (F(M * K, m * k) + F(N * K, n * k)) + M * N
        mem[3] = F(M * N)
    return flops, mem


def test_gemm_intensity_examples():
    assert gemm_intensity(1, 1, 1) == F(2, 3)
    assert gemm_intensity(96, 96, 96) == F(2 * 96, 3)
    assert float(gemm_intensity(4096, 4096, 4096)) == pytest.approx(2730.67, abs=0.01)
    with pytest.raises(ValueError):
        gemm_intensity(0, 1, 1)


def test_std_memory_bound_examples():
    assert std_gemm_memory_bound(64, 64, 64, RATIO100)
    assert not std_gemm_memory_bound(4096, 4096, 4096, RATIO100)
    fat_pipe = HardwareProfile(1.0, 1.0, 1e30)
    assert not std_gemm_memory_bound(2, 2, 2, fat_pipe)


@pytest.mark.parametrize("name", [STRASSEN, LADERMAN, STRASSEN2, STANDARD_222])
@pytest.mark.parametrize("fused", [False, True])
def test_stage_costs_match_table(catalog, name, fused):
    s = catalog[name]
    M, N, K = 24 * s.m, 20 * s.n, 36 * s.k
    flops, mem = table_closed_forms(s, M, N, K, fused)
    costs = stage_costs(s, M, N, K, RATIO100, fused)
    assert [c.stage for c in costs] == [Stage.COMBINE_A, Stage.COMBINE_B, Stage.GEMM, Stage.COMBINE_H]
    assert [F(c.flops) for c in costs] == flops
    assert [F(c.mem_elements) for c in costs] == mem
    m, k, n, R = s.m, s.k, s.n, s.rank
    nu, nv, nw = s.nnz
    assert costs[0].intensity == F(nu - R, m * k + R)
    assert costs[1].intensity == F(nv - R, n * k + R)
    if not fused:
        assert costs[2].intensity == F(2 * M * N * K, n * M * K + m * N * K + k * M * N)
        assert costs[3].intensity == F(nw - m * n, R + m * n)


def test_strassen_cells(catalog):
    s = catalog[STRASSEN]
    costs = stage_costs(s, 1024, 1024, 1024, RATIO100, fused=False)
    assert costs[0].intensity == F(5, 11)
    assert F(costs[2].flops, 2 * 1024**3) == F(7, 8)
    assert stage_costs(catalog[STANDARD_222], 64, 64, 64, RATIO100)[0].flops == 0


def test_stage_time_is_max_of_compute_and_memory(catalog):
    for c in stage_costs(catalog[LADERMAN], 300, 200, 100, RATIO100, fused=False):
        assert c.time_seconds == max(c.flops / c.throughput, c.mem_elements / c.beta)
        assert (c.bound == "compute") == (c.flops / c.throughput > c.mem_elements / c.beta)


@pytest.mark.parametrize("name", [STRASSEN, LADERMAN, STRASSEN2])
def test_costs_agree_with_counters(catalog, name):
    s = catalog[name]
    M, N, K = 8 * s.m, 6 * s.n, 10 * s.k
    rng = np.random.default_rng(3)
    a = rng.integers(-3, 4, (M, K))
    b = rng.integers(-3, 4, (K, N))
    ga, gb = pad_partition(a, s.m, s.k), pad_partition(b, s.k, s.n)

    unfused = stage_costs(s, M, N, K, RATIO100, fused=False)
    fused = stage_costs(s, M, N, K, RATIO100, fused=True)

    ca, cb, cg, ch = OpCounters(), OpCounters(), OpCounters(), OpCounters()
    inter = IntermediateSet(combine_a(ga, s, ca), combine_b(gb, s, cb))
    batched_gemm(inter, cg)
    combine_h(inter.h, s, (M, N), ch)
    assert unfused[0].flops == ca.scalar_adds
    assert unfused[1].flops == cb.scalar_adds
    assert unfused[2].flops == 2 * cg.scalar_multiplies
    assert unfused[3].flops == ch.scalar_adds
    assert unfused[2].mem_elements == cg.elements_loaded + cg.elements_stored

    ga_cnt, gb_cnt = OpCounters(), OpCounters()
    group_combine_a(ga, s, ga_cnt)
    group_combine_b(gb, s, gb_cnt)
    assert unfused[0].mem_elements == ga_cnt.elements_loaded + ga_cnt.elements_stored
    assert unfused[1].mem_elements == gb_cnt.elements_loaded + gb_cnt.elements_stored

    total = OpCounters()
    lcma_fused(a, b, s, ExecConfig(8, 8, 8, workers=1), total)
    stage34_traffic = total.loads["At"] + total.loads["Bt"] + total.stores["C"]
    assert fused[2].mem_elements == stage34_traffic
    assert total.stores["H"] == 0


def test_beneficial_strassen_crossover(catalog):
    s = catalog[STRASSEN]
    assert not lcma_beneficial(s, 1024, 1024, 1024, RATIO100)
    assert lcma_beneficial(s, 4096, 4096, 4096, RATIO100)
    assert not lcma_beneficial(s, 2600, 2600, 2600, RATIO100)
    assert lcma_beneficial(s, 2602, 2602, 2602, RATIO100)
    assert not lcma_beneficial(catalog[STANDARD_222], 8192, 8192, 8192, RATIO100)


def test_standard_time_example():
    assert estimate_time(STANDARD_GEMM, 4096, 4096, 4096, RATIO100) == pytest.approx(1.374e-3, rel=1e-3)
    with pytest.raises(ValueError):
        estimate_time("bogus", 1, 1, 1, RATIO100)


def test_infinite_bandwidth_limit(catalog):
    s = catalog[STRASSEN]
    hw = HardwareProfile(1e12, 1e12, 1e300)
    std = estimate_time(STANDARD_GEMM, 1024, 1024, 1024, hw)
    # combine adds still cost compute time, so compare the GEMM stage itself
    gemm = stage_costs(s, 1024, 1024, 1024, hw)[2].time_seconds
    assert gemm == pytest.approx(std * 7 / 8)


def in_regime(s, M, N, K, hw, fused):
    costs = stage_costs(s, M, N, K, hw, fused)
    combines = [costs[0], costs[1], costs[3]]
    return (
        all(c.compute_seconds <= c.memory_seconds for c in combines)
        and costs[2].compute_seconds >= costs[2].memory_seconds
        and not std_gemm_memory_bound(M, N, K, hw)
    )


def random_case(rng):
    M, N, K = (int(round(math.exp(rng.uniform(math.log(8), math.log(20000))))) for _ in range(3))
    beta = 10 ** rng.uniform(9, 12)
    hw = HardwareProfile(beta * 10 ** rng.uniform(0, 3), beta * 10 ** rng.uniform(1, 3), beta)
    return M, N, K, hw


def test_coherence_sampled(catalog):
    rng = np.random.default_rng(2024)
    schemes = [s for s in catalog if s.is_lower_complexity]
    checked = 0
    while checked < 200:
        M, N, K, hw = random_case(rng)
        for s in schemes:
            for fused in (True, False):
                if not in_regime(s, M, N, K, hw, fused):
                    continue
                lhs = lcma_beneficial(s, M, N, K, hw, fused)
                rhs = estimate_time(s, M, N, K, hw, fused) < estimate_time(STANDARD_GEMM, M, N, K, hw)
                assert lhs == rhs, (s.name, M, N, K, hw, fused)
                checked += 1


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 20000),
    st.integers(1, 20000),
    st.integers(1, 20000),
    st.floats(1e6, 1e15),
    st.floats(1e6, 1e15),
    st.floats(1e6, 1e15),
)
def test_select_properties(M, N, K, fm, fa, beta):
    cat = builtin_catalog()
    hw = HardwareProfile(fm, fa, beta)
    dec = select(cat, M, N, K, hw)
    if std_gemm_memory_bound(M, N, K, hw):
        assert dec.choice == STANDARD_GEMM and dec.memory_bound
        return
    times = {STANDARD_GEMM: estimate_time(STANDARD_GEMM, M, N, K, hw)}
    times.update({s.name: estimate_time(s, M, N, K, hw) for s in cat})
    assert dec.predicted_time == times
    assert times[dec.choice] == min(times.values())
    assert dec.predicted_speedup == pytest.approx(times[STANDARD_GEMM] / times[dec.choice])
    for s in cat:
        assert estimate_time(s, M, N, K, hw, True) <= estimate_time(s, M, N, K, hw, False)
        assert lcma_beneficial(s, M, N, K, hw, False) <= lcma_beneficial(s, M, N, K, hw, True)
        faster = HardwareProfile(fm, fa, beta * 4)
        assert lcma_beneficial(s, M, N, K, hw) <= lcma_beneficial(s, M, N, K, faster)


def test_select_ties_and_fallbacks(catalog):
    only_std = [catalog[STANDARD_222]]
    assert select(only_std, 4096, 4096, 4096, RATIO100).choice == STANDARD_GEMM
    assert select([], 4096, 4096, 4096, RATIO100).choice == STANDARD_GEMM
    assert select(catalog, 4096, 4096, 1, RATIO100).choice == STANDARD_GEMM


def test_large_rank_wins_under_fast_memory(catalog):
    hw = HardwareProfile(1e12, 1e12, 1e12)
    n = 8192
    t7 = estimate_time(catalog[STRASSEN], n, n, n, hw)
    t49 = estimate_time(catalog[STRASSEN2], n, n, n, hw)
    assert t49 < t7
    assert select(catalog, n, n, n, hw).choice == STRASSEN2


def test_ceilings(catalog):
    hw = RATIO100
    assert compute_ceiling(catalog[STRASSEN], hw) == pytest.approx(hw.flops_mul * 8 / 7)
    assert compute_ceiling(catalog[STRASSEN2], hw) == pytest.approx(hw.flops_mul * 64 / 49)
    assert compute_ceiling(STANDARD_GEMM, hw) == hw.flops_mul


def test_roofline_best_matches_select(catalog):
    hw = HardwareProfile(1e12, 1e12, 1e11)
    schemes = list(catalog)
    rows = roofline_table(schemes, hw, [1, 10, 100, 1000, 10000])
    best = [r for r in rows if r.algorithm.startswith("best:")]
    assert len(best) == 5
    for r in best:
        n = square_for_intensity(r.intensity)
        assert r.algorithm == "best:" + select(schemes, n, n, n, hw).choice
    assert best[0].algorithm == f"best:{STANDARD_GEMM}"
    assert {r.algorithm for r in roofline_table([], hw, [5.0])} == {STANDARD_GEMM, f"best:{STANDARD_GEMM}"}


def test_rank49_overtakes_strassen(catalog):
    hw = HardwareProfile(1e12, 1e12, 1e11)
    at = crossover(catalog[STRASSEN], catalog[STRASSEN2], hw)
    assert at is not None and at > 0
    n = square_for_intensity(at)
    assert estimate_time(catalog[STRASSEN2], n, n, n, hw) < estimate_time(catalog[STRASSEN], n, n, n, hw)


def test_profile_round_trip(tmp_path):
    hw = HardwareProfile(1.2345678901234e12, 3.3e11, 7.0e10, 6)
    path = tmp_path / "hw.txt"
    hw.save(path)
    assert HardwareProfile.load(path) == hw
    assert "beta_elems=" in path.read_text()


@pytest.mark.parametrize(
    "text",
    ["flops_mul=1\nflops_add=1\n", "flops_mul=1\nflops_add=1\nbeta_elems=x\n", "speed=1\n", "flops_mul=1\nflops_mul=2\n"],
)
def test_profile_format_errors(text):
    with pytest.raises(ProfileFormatError):
        HardwareProfile.from_text(text)


def test_profile_invariants():
    with pytest.raises(ValueError):
        HardwareProfile(0, 1, 1)
    with pytest.raises(ValueError):
        HardwareProfile(1, 1, 1, workers=0)
    with pytest.raises(ProfileFormatError):
        HardwareProfile.load("/nonexistent/profile.txt")
    assert beta_from_bytes(4e9, 4) == 1e9
