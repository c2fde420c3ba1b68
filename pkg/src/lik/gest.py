"""Non-parametric estimation of g as a piecewise-constant function.

Feature space is cut into equal-mass cells. For a random entity ``q_t`` per
period, the kernel row ``K_hat[q_t]`` is accumulated into per-cell loads, so
``y[t, q_t]`` becomes linear in the unknown cell means. Each cell mean is then
recovered by a sign-flipping moment estimator.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .errors import InsufficientDataError, InvalidDimensionError, NoSignalError

log = logging.getLogger(__name__)

DEFAULT_C = 0.5
_DUP_STEP = 1e-12


@dataclass(frozen=True, eq=False)
class PartitionSpec:
    """Product grid of cells over ``[-1, 1]^k``.

    ``edges[a]`` holds the ascending breakpoints of axis ``a`` (first -1, last 1).
    Cells are closed on the left and open on the right, except the last cell
    on each axis which also contains 1.
    """

    edges: tuple

    def __post_init__(self):
        for e in self.edges:
            if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
                raise InvalidDimensionError("axis breakpoints must be strictly increasing")

    @classmethod
    def uniform(cls, ell, k=1):
        counts = _balanced_factors(ell, k)
        return cls(tuple(np.linspace(-1.0, 1.0, m + 1) for m in counts))

    @property
    def k(self):
        return len(self.edges)

    @property
    def counts(self):
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def ell(self):
        return math.prod(self.counts)

    @property
    def boundaries(self):
        return self.edges[0] if self.k == 1 else self.edges

    def cell_index(self, x) -> np.ndarray:
        """Flat cell index of each point; ``x`` has trailing axis ``k`` (optional when k=1)."""
        x = np.asarray(x, dtype=float)
        if self.k == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != self.k:
            raise InvalidDimensionError(f"partition is over {self.k} features, got {x.shape[-1]}")
        if np.any(np.abs(x) > 1.0):
            log.warning("%d feature values outside [-1, 1] clamped to the boundary cell",
                        int(np.sum(np.abs(x) > 1.0)))
            x = np.clip(x, -1.0, 1.0)
        flat = np.zeros(x.shape[:-1], dtype=np.intp)
        for a, e in enumerate(self.edges):
            idx = np.searchsorted(e[1:-1], x[..., a], side="right")
            flat = flat * (len(e) - 1) + idx
        return flat

    def cell_bounds(self, j):
        """Per-axis ``(lo, hi)`` of flat cell ``j``."""
        multi = np.unravel_index(j, self.counts)
        return [(float(e[i]), float(e[i + 1])) for e, i in zip(self.edges, multi)]


def _balanced_factors(ell, k):
    """Split ``ell`` into ``k`` integer factors that are as equal as possible."""
    if ell < 1 or k < 1:
        raise InvalidDimensionError("ell and k must be positive")
    if k == 1:
        return (ell,)
    divisors = [m for m in range(1, ell + 1) if ell % m == 0]
    best = None
    for combo in itertools.combinations_with_replacement(divisors, k - 1):
        rest, rem = divmod(ell, math.prod(combo))
        if rem:
            continue
        factors = tuple(sorted(combo + (rest,), reverse=True))
        key = (max(factors) - min(factors), factors)
        if best is None or key < best:
            best = key
    return best[1]


def _axis_edges(values, m):
    if m == 1:
        return np.array([-1.0, 1.0])
    inner = np.quantile(values, np.arange(1, m) / m)
    edges = np.concatenate(([-1.0], inner, [1.0]))
    for i in range(1, len(edges)):
        if edges[i] <= edges[i - 1]:
            edges[i] = edges[i - 1] + _DUP_STEP
    return edges


def build_partition(calibration, ell: int) -> PartitionSpec:
    """Equal-mass partition from empirical quantiles of a calibration sample.

    ``calibration`` is 1-d (k=1) or ``N x k``.
    """
    cal = np.asarray(calibration, dtype=float)
    if cal.ndim == 1:
        cal = cal[:, None]
    if cal.ndim != 2:
        raise InvalidDimensionError(f"calibration must be 1-d or N x k, got {cal.shape}")
    if ell < 2:
        raise InsufficientDataError("insufficient-data: need at least two cells")
    if cal.shape[0] < 10 * ell:
        raise InsufficientDataError(
            f"insufficient-data: {cal.shape[0]} calibration points for {ell} cells (need {10 * ell})"
        )
    counts = _balanced_factors(ell, cal.shape[1])
    return PartitionSpec(tuple(_axis_edges(np.clip(cal[:, a], -1, 1), m) for a, m in enumerate(counts)))


@dataclass(frozen=True, eq=False)
class BinLoads:
    t: int | None
    q: int
    loads: np.ndarray


def map_regress(q: int, K_hat, x_t, partition: PartitionSpec, t: int | None = None) -> BinLoads:
    """Sum the kernel row ``K_hat[q]`` into the cells holding each entity's features."""
    K_hat = np.asarray(K_hat, dtype=float)
    d = K_hat.shape[0]
    if not 0 <= q < d:
        raise InvalidDimensionError(f"row index {q} outside [0, {d})")
    cells = partition.cell_index(x_t)
    if cells.shape != (d,):
        raise InvalidDimensionError(f"features for {cells.shape} entities, K_hat has {d}")
    loads = np.bincount(cells, weights=K_hat[q], minlength=partition.ell)
    return BinLoads(t, int(q), loads)


def pi1_statistic(loads, target_bin: int, ell: int | None = None) -> float:
    L = loads.loads if isinstance(loads, BinLoads) else np.asarray(loads, dtype=float)
    ell = L.shape[-1] if ell is None else ell
    if ell < 2:
        raise InvalidDimensionError("need ell >= 2")
    return float(_pi1(L, target_bin, ell))


def _pi1(L, target_bin, ell):
    own = L[..., target_bin]
    return own - (L.sum(axis=-1) - own) / (ell - 1)


def flip_threshold(c, d, ell):
    return (c / math.log(d)) * math.sqrt(d / ell)


def flip_sign_estimate(y, loads, target_bin: int, c: float, d: int):
    """Sign-flipped moment estimate of one cell mean.

    ``y[t]`` is the observed response of the sampled entity and ``loads[t]``
    its cell loads. Returns ``(mu, n_kept)``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    L = np.atleast_2d(np.asarray(loads, dtype=float))
    if L.shape[0] != y.shape[0] or y.shape[0] == 0:
        raise InvalidDimensionError("need one load vector per observation, at least one observation")
    ell = L.shape[1]
    if ell < 2:
        raise InvalidDimensionError("need ell >= 2")
    pi = _pi1(L, target_bin, ell)
    tau = flip_threshold(c, d, ell)
    b = np.where(pi >= tau, 1.0, np.where(pi < -tau, -1.0, 0.0))
    n_kept = int(np.count_nonzero(b))
    denom = float(b @ pi)
    if n_kept == 0 or not denom > 0:
        raise NoSignalError(
            f"no-signal: cell {target_bin} kept {n_kept} observations (threshold {tau:.4g}); lower c"
        )
    return float(b @ y) / denom, n_kept


@dataclass(frozen=True, eq=False)
class PiecewiseG:
    partition: PartitionSpec
    mu: np.ndarray
    c_threshold: float
    n_used: np.ndarray
    no_signal: tuple = ()

    def __call__(self, X):
        return self.mu[self.partition.cell_index(X)]


def estimate_g(X, Y, K_hat, partition: PartitionSpec, c: float = DEFAULT_C, seed: int = 0) -> PiecewiseG:
    """Fit cell means of g from a panel given a Gram estimate.

    One entity ``q_t`` is drawn per period and shared across cells. Cells
    without signal get ``mu = 0`` and ``n_used = 0`` and are listed in
    ``no_signal``. The returned means are centered to sum to zero.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    K_hat = np.asarray(K_hat, dtype=float)
    if X.ndim == 2:
        X = X[..., None]
    n, d = Y.shape
    if X.shape[:2] != (n, d) or K_hat.shape != (d, d):
        raise InvalidDimensionError(f"inconsistent shapes X={X.shape}, Y={Y.shape}, K_hat={K_hat.shape}")
    ell = partition.ell
    q = make_rng(seed).integers(0, d, size=n)
    cells = partition.cell_index(X)
    flat = (np.arange(n)[:, None] * ell + cells).ravel()
    loads = np.bincount(flat, weights=K_hat[q].ravel(), minlength=n * ell).reshape(n, ell)
    y = Y[np.arange(n), q]

    mu = np.zeros(ell)
    n_used = np.zeros(ell, dtype=int)
    failed = []
    for j in range(ell):
        try:
            mu[j], n_used[j] = flip_sign_estimate(y, loads, j, c, d)
        except NoSignalError:
            failed.append(j)
    ok = np.ones(ell, dtype=bool)
    ok[failed] = False
    if ok.any():
        mu[ok] -= mu[ok].mean()
    return PiecewiseG(partition, mu, float(c), n_used, tuple(failed))


def eval_piecewise(g: PiecewiseG, x) -> float:
    return float(g.mu[int(g.partition.cell_index(np.asarray(x, dtype=float)))])


def predict_nparam(g: PiecewiseG, X, K_hat) -> np.ndarray:
    """Forecast ``yhat[t, i] = sum_j K_hat[i, j] * g(x[t, j])``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[..., None]
    return g(X) @ np.asarray(K_hat, dtype=float).T
