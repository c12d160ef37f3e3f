import numpy as np
import pytest

from spectoken.graph import Graph


def path_graph(n: int) -> Graph:
    return Graph(n=n, edges=tuple((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> Graph:
    return Graph(n=n, edges=tuple((i, (i + 1) % n) for i in range(n)))


def complete_graph(n: int) -> Graph:
    return Graph(n=n, edges=tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def random_graph(rng: np.random.Generator, n: int, p: float = 0.3) -> Graph:
    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p)
    return Graph(n=n, edges=edges,
                 node_attrs=tuple(int(c) for c in rng.integers(0, 8, n)),
                 edge_attrs=tuple(int(c) for c in rng.integers(0, 4, len(edges))))


def random_tree(rng: np.random.Generator, n: int) -> Graph:
    edges = tuple((int(rng.integers(v)), v) for v in range(1, n))
    return Graph(n=n, edges=edges)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
