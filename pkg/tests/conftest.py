import numpy as np
import pytest

from zonosafe.sets import ConstrainedMatrixZonotope, ConstrainedZonotope, Polytope, Zonotope

# Benchmark constants, frozen.
A_TRUE = np.array([[0.8, 0.5], [-0.4, 1.2]])
B_TRUE = np.array([[0.0], [1.0]])
G_H = np.array([[0.05, 0.08], [0.01, 0.06]])
H_S = np.array([[0.2, 0.4], [-0.2, -0.4], [-0.15, 0.2], [0.15, -0.2]])
H_S_RHS = np.ones(4)
G_P = np.array([[0.03, -0.01], [-0.04, 0.05]])
C_P = np.array([1.0, -1.0])
K0 = np.array([[0.28, -1.83]])

_ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def safe_polytope():
    return Polytope(H_S, H_S_RHS)


@pytest.fixture
def disturbance():
    return Zonotope(np.zeros(2), G_H)


def random_cz(rng, n=2, s=4, nc=1, scale=1.0):
    """Random constrained zonotope whose constraint slice meets the box interior."""
    G = scale * rng.standard_normal((n, s))
    c = rng.standard_normal(n)
    if nc == 0:
        return ConstrainedZonotope(G, c)
    A = rng.standard_normal((nc, s))
    z0 = rng.uniform(-0.5, 0.5, s)
    return ConstrainedZonotope(G, c, A, A @ z0)


def random_cmz(rng, n=2, p=3, s=4, nc=1, pc=2):
    G = rng.standard_normal((s, n, p))
    C = rng.standard_normal((n, p))
    if nc == 0:
        return ConstrainedMatrixZonotope(C, G)
    A = rng.standard_normal((s, nc, pc))
    z0 = rng.uniform(-0.5, 0.5, s)
    return ConstrainedMatrixZonotope(C, G, A, np.tensordot(z0, A, axes=1))
