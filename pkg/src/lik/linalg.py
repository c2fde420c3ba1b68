"""Symmetric spectral utilities: eigendecomposition, truncation, PSD square root."""
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .errors import InvalidDimensionError, NumericError


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns aligned with eigenvalues

    @property
    def d(self):
        return len(self.eigenvalues)

    def gaps(self):
        """``gaps[i-1] = lambda_i - lambda_{i+1}`` for i = 1..d-1."""
        return self.eigenvalues[:-1] - self.eigenvalues[1:]

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def _square(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidDimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def eig_sym(A) -> Spectrum:
    """Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.

    ``A`` is symmetrized as ``(A + A.T) / 2`` first; asymmetry beyond
    ``1e-8 * max|A|`` is rejected.
    """
    A = _square(A)
    if not np.all(np.isfinite(A)):
        raise NumericError("matrix has non-finite entries")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-8 * scale:
        raise InvalidDimensionError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(w, kind="stable")[::-1]
    return Spectrum(w[order], V[:, order])


def _check_rank(spec, rank):
    if not 1 <= rank <= spec.d:
        raise InvalidDimensionError(f"rank {rank} outside [1, {spec.d}]")


def low_rank_project(spec: Spectrum, rank: int) -> np.ndarray:
    _check_rank(spec, rank)
    V = spec.eigenvectors[:, :rank]
    P = (V * spec.eigenvalues[:rank]) @ V.T
    return 0.5 * (P + P.T)


def psd_sqrt(spec: Spectrum, rank: int) -> np.ndarray:
    """Square root of the rank-truncated PSD part; negative eigenvalues clip to 0."""
    _check_rank(spec, rank)
    V = spec.eigenvectors[:, :rank]
    root = np.sqrt(np.maximum(spec.eigenvalues[:rank], 0.0))
    R = (V * root) @ V.T
    return 0.5 * (R + R.T)


def frobenius_distance(A, B) -> float:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise InvalidDimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.linalg.norm(A - B))


def spectral_norm(A, tol=1e-10, max_iter=10_000) -> float:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidDimensionError(f"expected a matrix, got shape {A.shape}")
    if A.shape[0] == A.shape[1] and np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(np.max(np.abs(A)), 1.0)):
        return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (A + A.T))), initial=0.0))
    # power iteration on A^T A
    M = A.T @ A
    v = make_rng(0).standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(nw - lam) <= tol * max(nw, 1.0):
            lam = nw
            break
        lam = nw
    return float(np.sqrt(lam))
