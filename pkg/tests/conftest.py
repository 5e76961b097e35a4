import numpy as np
import pytest

from botgraph.graph import from_edges


@pytest.fixture
def triangle_pendant():
    # a=0, b=1, c=2 form a triangle; d=3 hangs off c
    return from_edges([0, 1, 0, 2], [1, 2, 2, 3], labels=["a", "b", "c", "d"])


@pytest.fixture
def path_abc():
    return from_edges([0, 1], [1, 2], labels=["a", "b", "c"])


def two_cliques(k=10):
    """Two K_k joined by a single bridge edge."""
    src, dst = [], []
    for off in (0, k):
        for i in range(k):
            for j in range(i + 1, k):
                src.append(off + i)
                dst.append(off + j)
    src.append(0)
    dst.append(k)
    return from_edges(src, dst, n_nodes=2 * k)


def random_graph(rng, n, p):
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    return from_edges(iu[0][keep], iu[1][keep], n_nodes=n)


# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=str):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
