"""Estimating the latent Gram matrix from observed responses.

Two routes:

* data-driven: square root of the rank-truncated second-moment matrix
  ``Y.T @ Y / n``, truncated at the last large spectral gap;
* hint matrices: a caller-weighted (optionally exponentiated) combination of
  observable similarity matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, GapNotFoundError, InvalidDimensionError, NumericError
from .linalg import Spectrum, eig_sym, psd_sqrt

# Safety factor applied to the selected gap by ``auto_delta``.
AUTO_DELTA_MARGIN = 0.99
# Eigenvalues below this fraction of the top one are treated as numerically zero.
NUMERICAL_RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class GramEstimate:
    K_hat: np.ndarray
    rank_star: int
    delta: float
    spectrum_used: Spectrum


@dataclass(frozen=True, eq=False)
class HintSet:
    hints: list
    betas: list
    exponentiate: bool = False

    def __post_init__(self):
        if len(self.hints) == 0 or len(self.hints) != len(self.betas):
            raise InvalidDimensionError("need one beta per hint and at least one hint")
        shapes = {np.shape(h) for h in self.hints}
        if len(shapes) != 1:
            raise InvalidDimensionError(f"hint matrices differ in shape: {sorted(shapes)}")
        (shape,) = shapes
        if len(shape) != 2 or shape[0] != shape[1]:
            raise InvalidDimensionError(f"hints must be square, got {shape}")
        if not np.all(np.isfinite(np.asarray(self.betas, dtype=float))):
            raise NumericError("betas must be finite")


def covariance_target(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise InvalidDimensionError(f"Y must be n x d with n >= 1, got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise NumericError("Y has non-finite entries")
    C = Y.T @ Y / Y.shape[0]
    return 0.5 * (C + C.T)


def gram_error(K_hat, K) -> float:
    """Normalized squared Frobenius error ``||K_hat - K||_F^2 / d^2``."""
    K_hat = np.asarray(K_hat, dtype=float)
    K = np.asarray(K, dtype=float)
    if K_hat.shape != K.shape:
        raise InvalidDimensionError(f"shape mismatch {K_hat.shape} vs {K.shape}")
    d = K.shape[0]
    return float(np.sum((K_hat - K) ** 2) / d**2)


def covariance_error(Y, K) -> float:
    """``||Y.T Y / n - K.T K||_F / d^2``."""
    K = np.asarray(K, dtype=float)
    d = K.shape[0]
    return float(np.linalg.norm(covariance_target(Y) - K.T @ K) / d**2)


def auto_delta(spectrum: Spectrum, d: int) -> float:
    """Pick a gap parameter for :func:`estimate_k_dd` from the spectrum alone.

    Chooses the largest index ``i <= ceil(sqrt(d))`` whose gap beats every
    later gap by the safety margin, and returns ``0.99 * gap_i / d**2`` so the
    gap rule stops exactly at ``i``. Indices whose eigenvalue is numerically
    zero are skipped. If no such index exists the global largest gap is used.
    """
    gaps = spectrum.gaps()
    lam = spectrum.eigenvalues
    top = float(np.max(np.abs(lam), initial=0.0))
    if gaps.size == 0 or top == 0.0 or np.max(gaps) <= NUMERICAL_RANK_RTOL * top:
        raise DegenerateSpectrumError("degenerate-spectrum: all eigenvalue gaps are zero")
    floor = NUMERICAL_RANK_RTOL * top
    m = min(math.ceil(math.sqrt(d)), len(gaps))
    # suffix maxima: later[i] = max(gaps[i:])
    later = np.append(np.maximum.accumulate(gaps[::-1])[::-1], 0.0)
    for i in range(m, 0, -1):
        gap = gaps[i - 1]
        if lam[i - 1] > floor and gap > floor and AUTO_DELTA_MARGIN * gap > later[i]:
            return AUTO_DELTA_MARGIN * gap / d**2
    return AUTO_DELTA_MARGIN * float(np.max(gaps)) / d**2


def estimate_k_dd(Y, delta: float | None = None) -> GramEstimate:
    """Data-driven Gram estimate.

    Uses the largest index ``i`` with ``lambda_i - lambda_{i+1} >= delta * d**2``
    in the spectrum of ``Y.T Y / n``. ``delta=None`` selects it via
    :func:`auto_delta`.
    """
    C = covariance_target(Y)
    d = C.shape[0]
    if d < 2:
        raise InvalidDimensionError("need at least two entities")
    spec = eig_sym(C)
    if delta is None:
        delta = auto_delta(spec, d)
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    gaps = spec.gaps()
    hits = np.flatnonzero(gaps >= delta * d**2)
    if hits.size == 0:
        raise GapNotFoundError(float(np.max(gaps)), delta, d)
    rank_star = int(hits[-1]) + 1
    return GramEstimate(psd_sqrt(spec, rank_star), rank_star, float(delta), spec)


def hint_consolidate(hs: HintSet) -> GramEstimate:
    M = sum(float(b) * np.asarray(h, dtype=float) for b, h in zip(hs.betas, hs.hints))
    if hs.exponentiate:
        M = np.exp(M)
    M = 0.5 * (M + M.T)
    return GramEstimate(M, M.shape[0], 0.0, eig_sym(M))


def ema_update(prev, current, window: int) -> np.ndarray:
    """Exponential moving average step with ``alpha = 2 / (1 + window)``."""
    if window < 1:
        raise ValueError("window must be >= 1")
    prev = np.asarray(prev, dtype=float)
    current = np.asarray(current, dtype=float)
    if prev.shape != current.shape:
        raise InvalidDimensionError(f"shape mismatch {prev.shape} vs {current.shape}")
    alpha = 2.0 / (1.0 + window)
    return alpha * current + (1.0 - alpha) * prev
