import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import path_graph, random_graph
from spectoken import autodiff as ad
from spectoken.autodiff import Tensor
from spectoken.coarse import decompose
from spectoken.graph import Graph, normalized_laplacian
from spectoken.spectral import (MEXICAN_HAT_SCALE, NumericError, SpectralTokenParams,
                                build_spectrum_vector, init_spectral_token, kernel_features,
                                spectral_attention, spectral_kernel, sym_eigh)

mpmath.mp.dps = 50


def mexican_hat_oracle(x: float) -> float:
    x = mpmath.mpf(x)
    c = 2 / (mpmath.sqrt(3) * mpmath.pi ** mpmath.mpf("0.25"))
    return float(c * (1 - x * x) * mpmath.exp(-x * x / 2))


def params(thetas, W1, W2, kind="mexican_hat"):
    return SpectralTokenParams(Tensor(np.asarray(thetas, float), requires_grad=True),
                               Tensor(np.asarray(W1, float), requires_grad=True),
                               Tensor(np.asarray(W2, float), requires_grad=True), kind)


def token(g: Graph, p, k_T=8, k_G=8):
    spec_G = sym_eigh(normalized_laplacian(g))
    spec_T = sym_eigh(normalized_laplacian(decompose(g).as_graph()))
    return init_spectral_token(build_spectrum_vector(spec_T, spec_G, k_T, k_G), p).data


# ----------------------------------------------------------------------------
# eigensolver

def test_identity():
    s = sym_eigh(np.eye(3))
    np.testing.assert_array_equal(s.eigenvalues, [1, 1, 1])
    np.testing.assert_array_equal(np.abs(s.eigenvectors).sum(axis=0), [1, 1, 1])


def test_two_by_two():
    np.testing.assert_allclose(sym_eigh([[0.0, 1.0], [1.0, 0.0]]).eigenvalues, [-1, 1],
                               atol=1e-15)


def test_non_finite_input():
    with pytest.raises(NumericError):
        sym_eigh([[np.nan, 0.0], [0.0, 1.0]])


def test_empty_and_scalar():
    assert sym_eigh(np.zeros((0, 0))).eigenvalues.shape == (0,)
    np.testing.assert_array_equal(sym_eigh([[5.0]]).eigenvalues, [5.0])


def test_deterministic(rng):
    a = rng.normal(size=(9, 9))
    a = a + a.T
    s1, s2 = sym_eigh(a), sym_eigh(a)
    assert np.array_equal(s1.eigenvalues, s2.eigenvalues)
    assert np.array_equal(s1.eigenvectors, s2.eigenvectors)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 24), st.integers(0, 2 ** 32 - 1))
def test_against_lapack(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    a = (a + a.T) / 2
    s = sym_eigh(a)
    V, lam = s.eigenvectors, s.eigenvalues
    assert np.all(np.diff(lam) >= 0)
    np.testing.assert_allclose(lam, np.linalg.eigvalsh(a), atol=1e-10)
    assert np.abs(a @ V - V * lam).max() < 1e-10
    assert np.abs(V.T @ V - np.eye(n)).max() < 1e-10


def test_random_16_residual(rng):
    a = rng.normal(size=(16, 16))
    a = a + a.T
    s = sym_eigh(a)
    assert np.abs(a @ s.eigenvectors - s.eigenvectors * s.eigenvalues).max() < 1e-10


def test_repeated_eigenvalues():
    # K5: eigenvalues 0 and 5/4 (x4)
    g = Graph(n=5, edges=tuple((i, j) for i in range(5) for j in range(i + 1, 5)))
    s = sym_eigh(normalized_laplacian(g))
    np.testing.assert_allclose(s.eigenvalues, [0, 1.25, 1.25, 1.25, 1.25], atol=1e-12)
    assert np.abs(s.eigenvectors.T @ s.eigenvectors - np.eye(5)).max() < 1e-12


# ----------------------------------------------------------------------------
# spectrum vector

def test_spectrum_vector_copy():
    sv = build_spectrum_vector(np.array([0.0, 2.0]), np.array([0.0, 1.0, 2.0]), 2, 3)
    np.testing.assert_array_equal(sv.values, [0, 2, 0, 1, 2])


def test_spectrum_vector_pad_and_truncate():
    sv = build_spectrum_vector(np.array([0.0]), np.array([0.0, 1.0, 2.0]), 4, 2)
    np.testing.assert_array_equal(sv.values, [0, 0, 0, 0, 0, 1])
    assert (sv.k_T, sv.k_G) == (4, 2)


def test_spectrum_vector_needs_some_count():
    with pytest.raises(ValueError):
        build_spectrum_vector(None, np.array([0.0]), 0, 0)


# ----------------------------------------------------------------------------
# kernels

def test_mexican_hat_constants():
    assert abs(spectral_kernel(0.0, 1.0) - 0.8673250706) < 1e-10
    assert abs(MEXICAN_HAT_SCALE - mexican_hat_oracle(0.0)) < 1e-15
    assert spectral_kernel(1.0, 1.0) == 0.0
    assert spectral_kernel(-1.0, 1.0) == 0.0


def test_mexican_hat_x3():
    expected = mexican_hat_oracle(3.0)
    assert abs(expected - MEXICAN_HAT_SCALE * -8 * math.exp(-4.5)) < 1e-15
    assert abs(spectral_kernel(3.0, 1.0) - expected) < 1e-15


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5))
def test_mexican_hat_matches_oracle(x):
    assert abs(spectral_kernel(x, 1.0) - mexican_hat_oracle(x)) < 1e-12


def test_other_kernels():
    assert spectral_kernel(0.5, 2.0, "heat") == math.exp(-1.0)
    assert spectral_kernel(0.5, 2.0, "gaussian") == math.exp(-0.5)
    with pytest.raises(ValueError):
        spectral_kernel(0.5, 2.0, "cauchy")


def test_features_constant_at_zero_eigenvalues():
    p = params([0.5, 1.0, 3.0], np.zeros((3, 1)), np.zeros((3, 2)))
    G = kernel_features(np.zeros(4), p).data
    np.testing.assert_allclose(G, 0.8673250706, atol=1e-10)


def test_features_zero_theta():
    p = params([0.0], np.zeros((1, 1)), np.zeros((1, 1)))
    G = kernel_features(np.array([0.0, 0.7, 1.9]), p).data
    np.testing.assert_array_equal(G[:, 0], [MEXICAN_HAT_SCALE] * 3)


def test_features_small_case():
    p = params([1.0], np.zeros((1, 1)), np.zeros((1, 1)))
    G = kernel_features(np.array([0.0, 1.0]), p).data
    np.testing.assert_allclose(G, [[0.86733], [0.0]], atol=1e-5)


@pytest.mark.parametrize("kind", ["heat", "gaussian"])
def test_zero_theta_gives_unit_features_and_uniform_attention(kind, rng):
    p = params(np.zeros(4), rng.normal(size=(4, 1)), rng.normal(size=(4, 3)), kind)
    G = kernel_features(np.array([0.0, 0.4, 1.3, 2.0]), p)
    np.testing.assert_array_equal(G.data, np.ones((4, 4)))
    np.testing.assert_allclose(spectral_attention(G, p.W1).data, 0.25, atol=1e-15)


# ----------------------------------------------------------------------------
# attention and token

def test_attention_identical_rows(rng):
    s = spectral_attention(Tensor(np.tile(rng.normal(size=3), (5, 1))), Tensor(rng.normal(size=(3, 1))))
    np.testing.assert_allclose(s.data, 0.2, atol=1e-15)


def test_attention_zero_weights(rng):
    s = spectral_attention(Tensor(rng.normal(size=(4, 3))), Tensor(np.zeros((3, 1))))
    np.testing.assert_array_equal(s.data, [0.25] * 4)


def test_attention_ln2():
    s = spectral_attention(Tensor([[math.log(2.0)], [0.0]]), Tensor([[1.0]]))
    np.testing.assert_allclose(s.data, [2 / 3, 1 / 3], atol=1e-15)


def test_token_one_hot_selects_row():
    # heat kernel, theta=1: G = exp(-lam); W1 large picks the largest feature (lam=0)
    p = params([1.0], [[200.0]], [[1.0, -2.0]], "heat")
    z = init_spectral_token(np.array([0.0, 2.0, 2.0]), p).data
    np.testing.assert_allclose(z, [1.0, -2.0], atol=1e-12)


def test_token_uniform_average(rng):
    W2 = rng.normal(size=(3, 4))
    p = params([0.5, 1.0, 2.0], np.zeros((3, 1)), W2)
    lam = np.array([0.3, 1.7])
    V = kernel_features(lam, p).data @ W2
    np.testing.assert_allclose(init_spectral_token(lam, p).data, V.mean(axis=0), atol=1e-15)


def test_token_invariant_to_spectrum_order(rng):
    p = SpectralTokenParams.init(8, 5, rng)
    lam = rng.uniform(0, 2, 10)
    z = init_spectral_token(lam, p).data
    np.testing.assert_allclose(init_spectral_token(lam[rng.permutation(10)], p).data, z,
                               atol=1e-14)


def test_token_batched_matches_single(rng):
    p = SpectralTokenParams.init(6, 4, rng)
    lam = rng.uniform(0, 2, (3, 7))
    batched = init_spectral_token(lam, p).data
    for b in range(3):
        np.testing.assert_allclose(batched[b], init_spectral_token(lam[b], p).data, atol=1e-15)


def test_init_ranges(rng):
    p = SpectralTokenParams.init(1000, 3, rng)
    assert p.thetas.data.min() >= 0.5 and p.thetas.data.max() <= 4.0
    bound = 1 / math.sqrt(1000)
    assert np.abs(p.W1.data).max() <= bound and np.abs(p.W2.data).max() <= bound
    # log-uniform: the median sits near the geometric mean
    assert abs(np.median(p.thetas.data) - math.sqrt(2.0)) < 0.15


@pytest.mark.parametrize("kind", ["mexican_hat", "heat", "gaussian"])
def test_token_gradients(kind, rng):
    p = SpectralTokenParams.init(5, 4, rng, kind)
    lam = rng.uniform(0, 2, 9)
    w = rng.normal(size=4)
    f = lambda _: (init_spectral_token(lam, p) * w).sum()  # noqa: E731
    for t in (p.thetas, p.W1, p.W2):
        assert ad.grad_check(f, t) < 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_token_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    p = SpectralTokenParams.init(16, 12, rng)
    g = random_graph(rng, 12, 0.3)
    z = token(g, p)
    for _ in range(5):
        assert np.abs(token(g.permute(rng.permutation(g.n)), p) - z).max() < 1e-9


def test_cospectral_disjoint_unions(rng):
    p = SpectralTokenParams.init(16, 8, rng)
    a, b = path_graph(4), Graph(n=3, edges=((0, 1), (1, 2), (2, 0)))

    def union(first, second):
        edges = list(first.edges) + [(u + first.n, v + first.n) for u, v in second.edges]
        return Graph(n=first.n + second.n, edges=tuple(edges))

    np.testing.assert_allclose(token(union(a, b), p), token(union(b, a), p), atol=1e-12)
