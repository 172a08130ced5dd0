import itertools

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mode_product_loops(x, a, mode):
    """Elementwise sum over the contracted index, one output entry at a time."""
    out_shape = list(x.shape)
    out_shape[mode] = a.shape[0]
    out = np.zeros(out_shape)
    for idx in itertools.product(*(range(s) for s in out_shape)):
        i = idx[mode]
        total = 0.0
        for j in range(x.shape[mode]):
            src = list(idx)
            src[mode] = j
            total += x[tuple(src)] * a[i, j]
        out[idx] = total
    return out


def multi_mode_product_loops(x, mats):
    """Full nested sum: y[i...] = sum_j x[j...] * prod_d a_d[i_d, j_d]."""
    out_shape = tuple(a.shape[0] for a in mats)
    out = np.zeros(out_shape)
    for i in itertools.product(*(range(s) for s in out_shape)):
        total = 0.0
        for j in itertools.product(*(range(s) for s in x.shape)):
            w = x[j]
            for d, a in enumerate(mats):
                w *= a[i[d], j[d]]
            total += w
        out[i] = total
    return out


def kron_loops(a, b):
    m, n = a.shape
    p, q = b.shape
    out = np.zeros((m * p, n * q))
    for i in range(m):
        for j in range(n):
            for k in range(p):
                for l in range(q):
                    out[i * p + k, j * q + l] = a[i, j] * b[k, l]
    return out


ACCEPTANCE_LINES = []


def record_criterion(name, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
