import numpy as np
import pytest

from socoswarm.graph import FullCoupling, GraphSnapshot


def random_coupling_matrix(rng, d, m, l):
    """Square matrix with squared singular values spanning exactly [m, l]."""
    U, _ = np.linalg.qr(rng.normal(size=(d, d)))
    V, _ = np.linalg.qr(rng.normal(size=(d, d)))
    s2 = rng.uniform(m, l, size=d)
    s2[0] = m
    if d > 1:
        s2[-1] = l
    return U @ np.diag(np.sqrt(s2)) @ V.T


def random_graph(rng, N, p=0.4, connected=True, full=None):
    """Erdos-Renyi style graph; a path backbone keeps it connected when asked.

    ``full = (d, m, l)`` puts a random FullCoupling on every edge.
    """
    pairs = {(i, j) for i in range(N) for j in range(i + 1, N) if rng.random() < p}
    if connected:
        pairs |= {(i, i + 1) for i in range(N - 1)}
    if full is None:
        return GraphSnapshot(N, sorted(pairs))
    d, m, l = full
    return GraphSnapshot(N, {e: FullCoupling(random_coupling_matrix(rng, d, m, l)) for e in sorted(pairs)})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# PASS/FAIL lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: _criterion_key(s.split()[1])):
            terminalreporter.write_line(line)


def _criterion_key(label):
    digits = "".join(ch for ch in label if ch.isdigit())
    return (int(digits or 0), label)
