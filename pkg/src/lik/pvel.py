"""Gradient boosting with linear weak learners mixed through a Gram estimate.

Each weak learner uses three features and their three pairwise products,

    g_m(x) = b1 x_a + b2 x_b + b3 x_c + b4 x_a x_b + b5 x_a x_c + b6 x_b x_c,

and the model forecast is ``yhat[t, i] = sum_j K_hat[i, j] * eta * sum_m g_m(x[t, j])``.
With ``K_hat = I`` this is ordinary univariate boosting ("poor-man" mode).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._stats import center_rows
from .errors import InvalidDimensionError

PINV_RTOL = 1e-10
N_TERMS = 6


@dataclass(frozen=True, eq=False)
class LinearLearner:
    idx: tuple
    beta: np.ndarray

    def __post_init__(self):
        if len(self.idx) != 3 or len(set(self.idx)) != 3:
            raise InvalidDimensionError(f"need three distinct feature indices, got {self.idx}")
        if np.shape(self.beta) != (N_TERMS,):
            raise InvalidDimensionError("need six coefficients")

    def terms(self, X):
        return _terms(X, self.idx)

    def __call__(self, X):
        return self.terms(X) @ self.beta


@dataclass(frozen=True, eq=False)
class BoostedModel:
    learners: tuple
    eta: float
    k: int
    train_mse: tuple = ()

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def b(self):
        return len(self.learners)

    def g(self, X):
        """Un-mixed signal ``eta * sum_m g_m(X)``."""
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1])
        for learner in self.learners:
            out += learner(X)
        return self.eta * out


def _terms(X, idx):
    a, b, c = (X[..., j] for j in idx)
    return np.stack([a, b, c, a * b, a * c, b * c], axis=-1)


def _check_panel(Y, X, K_hat):
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    K_hat = np.asarray(K_hat, dtype=float)
    if X.ndim != 3 or Y.shape != X.shape[:2] or K_hat.shape != (Y.shape[1], Y.shape[1]):
        raise InvalidDimensionError(
            f"inconsistent shapes Y={Y.shape}, X={X.shape}, K_hat={K_hat.shape}"
        )
    if X.shape[2] < 3:
        raise InvalidDimensionError(f"need at least 3 features, got k={X.shape[2]}")
    return Y, X, K_hat


def neighbor_features(K_hat, X_t) -> np.ndarray:
    """``F[:, i] = sum_j K_hat[i, j] * x_t[j]``, arranged k x d."""
    K_hat = np.asarray(K_hat, dtype=float)
    X_t = np.asarray(X_t, dtype=float)
    if X_t.ndim != 2 or K_hat.shape != (X_t.shape[0], X_t.shape[0]):
        raise InvalidDimensionError(f"shape mismatch K_hat={K_hat.shape}, X_t={X_t.shape}")
    return (K_hat @ X_t).T


def _feature_scores(mixed_c, mixed_norm, mixed_flat, Y_res):
    """Per-feature sum over periods of the cross-sectional correlation with the residual."""
    Rc, rn, rflat = center_rows(Y_res)
    num = np.matmul(mixed_c, Rc[:, :, None])[..., 0]
    skip = mixed_flat | rflat[:, None]
    denom = np.where(skip, 1.0, mixed_norm * rn[:, None])
    return np.where(skip, 0.0, num / denom).sum(axis=0)


def _prep_mixed(M):
    # M: n x d x k; correlation is taken across entities, so work on n x k x d rows
    return center_rows(np.ascontiguousarray(np.moveaxis(M, 1, 2)))


def _top3(scores):
    order = np.argsort(-scores, kind="stable")
    return tuple(int(j) for j in order[:3])


def select_features(F_all, Y_res):
    """Indices of the three features whose mixed rows correlate most with the residual.

    ``F_all`` is ``n x k x d`` (one neighbor-feature matrix per period).
    Ties go to the lower index.
    """
    F_all = np.asarray(F_all, dtype=float)
    Y_res = np.asarray(Y_res, dtype=float)
    if F_all.ndim != 3 or F_all.shape[0] != Y_res.shape[0] or F_all.shape[2] != Y_res.shape[1]:
        raise InvalidDimensionError(f"shape mismatch F_all={F_all.shape}, Y_res={Y_res.shape}")
    if F_all.shape[1] < 3:
        raise InvalidDimensionError(f"need at least 3 features, got k={F_all.shape[1]}")
    scores = _feature_scores(*_prep_mixed(np.moveaxis(F_all, 1, 2)), Y_res)
    return _top3(scores)


def _solve(Zmix, y, n_terms):
    Z = Zmix.reshape(-1, Zmix.shape[-1])[:, :n_terms]
    G = Z.T @ Z
    rhs = Z.T @ y.ravel()
    beta = np.zeros(N_TERMS)
    beta[:n_terms] = np.linalg.pinv(G, rcond=PINV_RTOL, hermitian=True) @ rhs
    return beta


def _fit(Y_res, X, K_hat, prepped, interactions):
    idx = _top3(_feature_scores(*prepped, Y_res))
    Zmix = K_hat @ _terms(X, idx)
    beta = _solve(Zmix, Y_res, N_TERMS if interactions else 3)
    return LinearLearner(idx, beta), Zmix


def fit_weak_learner(Y_res, X, K_hat, interactions: bool = True) -> LinearLearner:
    """Least-squares fit of one six-term learner on the residual panel."""
    Y_res, X, K_hat = _check_panel(Y_res, X, K_hat)
    learner, _ = _fit(Y_res, X, K_hat, _prep_mixed(K_hat @ X), interactions)
    return learner


def boost(Y, X, K_hat, eta: float = 0.1, rounds: int = 50, interactions: bool = True,
          return_residual: bool = False, log=None):
    """Fit ``rounds`` weak learners sequentially on shrinking residuals.

    ``train_mse`` on the result holds the in-sample MSE before the first round
    and after each round. ``log`` (optional) is called as ``log(round, mse)``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    Y, X, K_hat = _check_panel(Y, X, K_hat)
    prepped = _prep_mixed(K_hat @ X)
    R = Y.copy()
    mse = [float(np.mean(R * R))]
    learners = []
    for m in range(rounds):
        learner, Zmix = _fit(R, X, K_hat, prepped, interactions)
        R -= eta * (Zmix @ learner.beta)
        learners.append(learner)
        mse.append(float(np.mean(R * R)))
        if log is not None:
            log(m + 1, mse[-1])
    model = BoostedModel(tuple(learners), float(eta), X.shape[2], tuple(mse))
    return (model, R) if return_residual else model


def predict(model: BoostedModel, X_new, K_hat) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=float)
    K_hat = np.asarray(K_hat, dtype=float)
    if X_new.ndim != 3 or X_new.shape[2] != model.k or K_hat.shape != (X_new.shape[1],) * 2:
        raise InvalidDimensionError(
            f"shape mismatch X_new={X_new.shape}, K_hat={K_hat.shape}, model k={model.k}"
        )
    return model.g(X_new) @ K_hat.T
