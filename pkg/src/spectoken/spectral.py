"""Laplacian spectra and the spectral [CLS] token.

The token is built in three steps: each retained eigenvalue is lifted to
``t`` kernel channels ``g(theta_j * lambda_i)``, a softmax over eigenvalue
positions scores the lifted rows, and the scores pool per-eigenvalue value
embeddings into one ``d``-vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MEXICAN_HAT_SCALE = 2.0 / (math.sqrt(3.0) * math.pi ** 0.25)
KERNELS = ("mexican_hat", "heat", "gaussian")


class NumericError(ArithmeticError):
    pass


# ----------------------------------------------------------------------------
# symmetric eigensolver

@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # column i pairs with eigenvalue i

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings that visit every (p, q), p < q, once per sweep in n-1 rounds
    of disjoint pairs (circle method)."""
    players = list(range(n + (n % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.int64), np.array(qs, dtype=np.int64)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigh(a, tol: float = 1e-12, max_sweeps: int = 100) -> Spectrum:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep runs through every off-diagonal pair once, rotating n/2
    disjoint pairs at a time. Iteration stops once the largest off-diagonal
    magnitude drops below ``tol * max(1, max|a|)``.
    """
    A = np.array(a, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericError("matrix has non-finite entries")
    n = A.shape[0]
    V = np.eye(n)
    if n == 0:
        return Spectrum(np.zeros(0), V)
    A = 0.5 * (A + A.T)
    thresh = tol * max(1.0, float(np.abs(A).max()))
    off_mask = ~np.eye(n, dtype=bool)
    rounds = _round_robin(n)

    for _ in range(max_sweeps):
        if n == 1 or np.abs(A[off_mask]).max() < thresh:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            active = apq != 0.0
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            app, aqq = A[P, P], A[Q, Q]
            tau = (aqq - app) / (2.0 * apq)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            J = np.eye(n)
            J[P, P] = c
            J[Q, Q] = c
            J[P, Q] = s
            J[Q, P] = -s
            A = J.T @ A @ J
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            A[P, P] = app - t * apq
            A[Q, Q] = aqq + t * apq
            V = V @ J
        A = 0.5 * (A + A.T)
    else:
        raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps")

    evals = np.diag(A).copy()
    order = np.argsort(evals, kind="stable")
    return Spectrum(evals[order], V[:, order])


def laplacian_spectrum(lap: np.ndarray) -> Spectrum:
    return sym_eigh(lap)


# ----------------------------------------------------------------------------
# spectrum vector

@dataclass(frozen=True)
class SpectrumVector:
    values: np.ndarray
    k_T: int
    k_G: int


def _fit(evals: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(k)
    keep = np.sort(np.asarray(evals, dtype=np.float64))[:k]
    out[: keep.shape[0]] = keep
    return out


def build_spectrum_vector(spec_T, spec_G, k_T: int, k_G: int) -> SpectrumVector:
    """Tree eigenvalues then graph eigenvalues, each cut or zero-padded to its count.

    ``spec_T`` may be None when ``k_T == 0`` (no coarse-grained tree).
    """
    if k_T < 0 or k_G < 0 or k_T + k_G == 0:
        raise ValueError(f"need non-negative counts with k_T + k_G >= 1, got {k_T}, {k_G}")
    lam_T = np.zeros(0) if spec_T is None else getattr(spec_T, "eigenvalues", spec_T)
    lam_G = getattr(spec_G, "eigenvalues", spec_G)
    return SpectrumVector(np.concatenate([_fit(lam_T, k_T), _fit(lam_G, k_G)]), k_T, k_G)


# ----------------------------------------------------------------------------
# kernels

def spectral_kernel(lam: float, theta: float, kind: str = "mexican_hat") -> float:
    x = theta * lam
    if kind == "mexican_hat":
        return MEXICAN_HAT_SCALE * (1.0 - x * x) * math.exp(-0.5 * x * x)
    if kind == "heat":
        return math.exp(-x)
    if kind == "gaussian":
        return math.exp(-0.5 * x * x)
    raise ValueError(f"unknown kernel {kind!r}")


def _mexican_hat(x):
    return MEXICAN_HAT_SCALE * (1.0 - x * x) * np.exp(-0.5 * x * x)


def _mexican_hat_deriv(x, y):
    return MEXICAN_HAT_SCALE * x * (x * x - 3.0) * np.exp(-0.5 * x * x)


_KERNEL_FNS = {
    "mexican_hat": (_mexican_hat, _mexican_hat_deriv),
    "heat": (lambda x: np.exp(-x), lambda x, y: -y),
    "gaussian": (lambda x: np.exp(-0.5 * x * x), lambda x, y: -x * y),
}


def kernel_op(x, kind: str) -> Tensor:
    try:
        fn, deriv = _KERNEL_FNS[kind]
    except KeyError:
        raise ValueError(f"unknown kernel {kind!r}") from None
    return ad.unary(x, fn, deriv)


# ----------------------------------------------------------------------------
# spectral token

@dataclass
class SpectralTokenParams:
    thetas: Tensor  # (t,)
    W1: Tensor  # (t, 1)
    W2: Tensor  # (t, d)
    kernel_kind: str = "mexican_hat"

    def __post_init__(self):
        t = self.thetas.shape[0]
        if t < 1 or self.W2.shape[1] < 1:
            raise ValueError("need at least one kernel channel and one output dim")
        if self.W1.shape != (t, 1) or self.W2.shape[0] != t:
            raise ad.ShapeError(
                f"thetas {self.thetas.shape}, W1 {self.W1.shape}, W2 {self.W2.shape} disagree")
        if self.kernel_kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel_kind!r}")

    @classmethod
    def init(cls, t: int, d: int, rng: np.random.Generator,
             kernel_kind: str = "mexican_hat") -> "SpectralTokenParams":
        bound = 1.0 / math.sqrt(t)
        return cls(
            thetas=Tensor(np.exp(rng.uniform(math.log(0.5), math.log(4.0), t)),
                          requires_grad=True, name="spec.thetas"),
            W1=Tensor(rng.uniform(-bound, bound, (t, 1)), requires_grad=True, name="spec.W1"),
            W2=Tensor(rng.uniform(-bound, bound, (t, d)), requires_grad=True, name="spec.W2"),
            kernel_kind=kernel_kind,
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"thetas": self.thetas, "W1": self.W1, "W2": self.W2}


def kernel_features(sv, params: SpectralTokenParams) -> Tensor:
    """``G[..., i, j] = g(thetas[j] * values[..., i])`` -- shape ``(..., k, t)``.

    ``sv`` is a SpectrumVector or a stack of eigenvalue rows ``(batch, k)``.
    """
    lam = np.asarray(getattr(sv, "values", sv), dtype=np.float64)[..., None]
    return kernel_op(ad.mul(lam, params.thetas), params.kernel_kind)


def spectral_attention(features: Tensor, W1: Tensor) -> Tensor:
    """Softmax over eigenvalue positions of ``features @ W1``; shape ``(..., k)``."""
    logits = ad.matmul(features, W1)
    return ad.softmax(logits.reshape(logits.shape[:-1]), axis=-1)


def init_spectral_token(sv, params: SpectralTokenParams) -> Tensor:
    """Attention-pooled value embeddings ``sum_i s_i * (G @ W2)_i``; shape ``(..., d)``."""
    feats = kernel_features(sv, params)
    s = spectral_attention(feats, params.W1)
    values = ad.matmul(feats, params.W2)
    return (ad.reshape(s, s.shape + (1,)) * values).sum(axis=-2)
