import itertools

import numpy as np
import pytest

from lcma.library import builtin_catalog


def loop_identity_ok(scheme):
    """Pure-Python check of the bilinear identity, no einsum involved."""
    m, k, n = scheme.m, scheme.k, scheme.n
    u, v, w = scheme.u.tolist(), scheme.v.tolist(), scheme.w.tolist()
    for i, ip, l, lp, j, jp in itertools.product(range(m), range(m), range(k), range(k), range(n), range(n)):
        total = sum(w[r][i][j] * u[r][ip][l] * v[r][lp][jp] for r in range(scheme.rank))
        if total != int(i == ip and l == lp and j == jp):
            return False
    return True


def loop_matmul(a, b):
    """Triple-loop product on Python ints."""
    a, b = a.tolist(), b.tolist()
    K, N = len(b), len(b[0])
    return np.array([[sum(row[p] * b[p][j] for p in range(K)) for j in range(N)] for row in a], dtype=np.int64)


@pytest.fixture(scope="session")
def catalog():
    return builtin_catalog()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        status, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
