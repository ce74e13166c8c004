import functools

import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
SPIN = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
}


def dense_term(n, coefficient, factors):
    """Kronecker-product oracle with qubit 0 as the leftmost factor."""
    mats = [SPIN[factors[q]] if q in factors else I2 for q in range(n)]
    return coefficient * functools.reduce(np.kron, mats)


def dense_model(model):
    n = model.n
    h = np.zeros((1 << n, 1 << n), dtype=complex)
    for (i, j, a, b), J in model.couplings.items():
        h += dense_term(n, -J, {i: a, j: b})
    for q, f in enumerate(model.fields):
        h += dense_term(n, -f, {q: "x"})
    return h


def dense_expm(h, t):
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
