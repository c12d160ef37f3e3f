import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import complete_graph, path_graph, random_graph
from spectoken.graph import Graph, GraphValidationError, degrees, normalized_laplacian


def test_degrees_examples():
    assert degrees(Graph(n=1)).tolist() == [0]
    assert degrees(path_graph(3)).tolist() == [1, 2, 1]
    assert degrees(complete_graph(4)).tolist() == [3, 3, 3, 3]


def test_laplacian_k2():
    np.testing.assert_array_equal(normalized_laplacian(path_graph(2)), [[1, -1], [-1, 1]])


def test_laplacian_isolated_node():
    np.testing.assert_array_equal(normalized_laplacian(Graph(n=1)), [[0.0]])


def test_laplacian_p3_eigenvalues():
    np.testing.assert_allclose(np.linalg.eigvalsh(normalized_laplacian(path_graph(3))),
                               [0, 1, 2], atol=1e-12)


def test_isolated_rows_are_zero():
    L = normalized_laplacian(Graph(n=3, edges=((0, 1),)))
    assert not L[2].any() and not L[:, 2].any()


@pytest.mark.parametrize("edges, n", [(((0, 0),), 1), (((0, 1), (1, 0)), 2), (((0, 2),), 2)])
def test_invalid_graphs(edges, n):
    with pytest.raises(GraphValidationError):
        Graph(n=n, edges=edges)


def test_attr_length_checked():
    with pytest.raises(GraphValidationError):
        Graph(n=2, edges=((0, 1),), node_attrs=(1,))


def test_equality_is_nan_aware():
    a = Graph(n=1, targets=[float("nan"), 1.0])
    b = Graph(n=1, targets=[float("nan"), 1.0])
    assert a == b
    assert a != Graph(n=1, targets=[0.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 14), st.integers(0, 2 ** 32 - 1))
def test_laplacian_properties(n, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.35)
    L = normalized_laplacian(g)
    assert np.array_equal(L, L.T)
    ev = np.linalg.eigvalsh(L)
    assert ev.min() > -1e-10 and ev.max() < 2 + 1e-10

    perm = rng.permutation(n)
    P = np.zeros((n, n))
    P[perm, np.arange(n)] = 1.0
    Lp = normalized_laplacian(g.permute(perm))
    np.testing.assert_allclose(Lp, P @ L @ P.T, atol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(Lp), ev, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2 ** 32 - 1))
def test_connected_graph_has_simple_zero(n, seed):
    rng = np.random.default_rng(seed)
    edges = {(int(rng.integers(v)), v) for v in range(1, n)}
    extra = {(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.2}
    g = Graph(n=n, edges=tuple(sorted(edges | extra)))
    ev = np.linalg.eigvalsh(normalized_laplacian(g))
    assert int((np.abs(ev) < 1e-8).sum()) == 1
