"""Cross-sectional forecast evaluation and t-statistic weighted consolidation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._stats import center_rows, rowwise_corr
from .errors import (
    DegenerateVarianceError,
    DegenerateWeightsError,
    InvalidDimensionError,
    InvalidWeightError,
    UndefinedBetaError,
)

DEFAULT_HORIZON = 5
DEFAULT_QUANTILE = 0.2
TRADING_DAYS = 252


def default_nw_lag(horizon=DEFAULT_HORIZON):
    return max(horizon - 1, 0)


def default_annualization(horizon=DEFAULT_HORIZON):
    return TRADING_DAYS / horizon


@dataclass(frozen=True, eq=False)
class EvalReport:
    corr: float
    w_corr: float
    t_stat: float
    w_t_stat: float
    pnl_series: np.ndarray
    pnl_total: float
    sharpe: float
    n_days: int
    flagged_days: tuple = ()

    def as_rows(self):
        return [
            ("corr", self.corr), ("w_corr", self.w_corr), ("t_stat", self.t_stat),
            ("w_t_stat", self.w_t_stat), ("pnl_total", self.pnl_total),
            ("sharpe", self.sharpe), ("n_days", self.n_days),
        ]


@dataclass(frozen=True, eq=False)
class ForecastSet:
    forecasts: list
    in_sample_tstats: list
    names: list | None = None

    def __post_init__(self):
        if len(self.forecasts) == 0:
            raise InvalidDimensionError("need at least one forecast")
        if len(self.forecasts) != len(self.in_sample_tstats):
            raise InvalidDimensionError("need one t-statistic per forecast")
        if len({np.shape(f) for f in self.forecasts}) != 1:
            raise InvalidDimensionError("forecast matrices differ in shape")


def _pair(Y, Yhat):
    Y = np.asarray(Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape or Y.ndim != 2:
        raise InvalidDimensionError(f"shape mismatch Y={Y.shape}, Yhat={Yhat.shape}")
    return Y, Yhat


def _day_weights(w, shape):
    w = np.asarray(w, dtype=float)
    if w.shape != shape:
        raise InvalidDimensionError(f"weights have shape {w.shape}, expected {shape}")
    if not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise InvalidWeightError("invalid-weight: weights must be positive and finite")
    return w / w.sum(axis=1, keepdims=True)


def _mean_unflagged(per_day, flagged):
    keep = ~flagged
    return float(per_day[keep].mean()) if keep.any() else 0.0


def daily_corr(Y, Yhat):
    """Per-day Pearson correlation across entities.

    Returns ``(per_day, mean, flagged)``; zero-variance days score 0, are
    flagged and excluded from the mean.
    """
    Y, Yhat = _pair(Y, Yhat)
    if Y.shape[1] < 3:
        raise InvalidDimensionError("need at least 3 entities")
    per_day, flagged = rowwise_corr(Y, Yhat)
    return per_day, _mean_unflagged(per_day, flagged), flagged


def weighted_corr(Y, Yhat, w):
    Y, Yhat = _pair(Y, Yhat)
    wn = _day_weights(w, Y.shape)
    per_day, flagged = rowwise_corr(Y, Yhat, wn)
    return per_day, _mean_unflagged(per_day, flagged), flagged


def daily_beta(y_t, yhat_t, w_t=None) -> float:
    """No-intercept least-squares slope of ``y_t`` on ``yhat_t`` (optionally weighted)."""
    y_t = np.asarray(y_t, dtype=float)
    yhat_t = np.asarray(yhat_t, dtype=float)
    w_t = np.ones_like(y_t) if w_t is None else np.asarray(w_t, dtype=float)
    den = float(np.sum(w_t * yhat_t * yhat_t))
    if den == 0.0:
        raise UndefinedBetaError("undefined-beta: forecast is identically zero")
    return float(np.sum(w_t * y_t * yhat_t)) / den


def beta_series(Y, Yhat, w=None):
    """Daily betas, skipping days with an all-zero forecast."""
    Y, Yhat = _pair(Y, Yhat)
    wn = None if w is None else _day_weights(w, Y.shape)
    out = []
    for t in range(Y.shape[0]):
        try:
            out.append(daily_beta(Y[t], Yhat[t], None if wn is None else wn[t]))
        except UndefinedBetaError:
            continue
    return np.array(out)


def newey_west_se(series, lag: int) -> float:
    """Standard error of the mean with a Bartlett-kernel long-run variance."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if lag < 0:
        raise ValueError("lag must be >= 0")
    if n < lag + 2:
        raise InvalidDimensionError(f"need at least lag + 2 = {lag + 2} observations, got {n}")
    e = x - x.mean()
    lrv = e @ e / n
    for ell in range(1, lag + 1):
        gamma = e[ell:] @ e[:-ell] / n
        lrv += 2.0 * (1.0 - ell / (lag + 1)) * gamma
    return math.sqrt(max(lrv, 0.0) / n)


def newey_west_tstat(beta_series, lag: int) -> float:
    se = newey_west_se(beta_series, lag)
    if se == 0.0:
        raise DegenerateVarianceError("degenerate-variance: Newey-West standard error is zero")
    return float(np.mean(beta_series)) / se


def pnl_series(Y, Yhat, quantile: float = DEFAULT_QUANTILE) -> np.ndarray:
    """Daily PnL of trading ``sign(yhat)`` on the top ``quantile`` of ``|yhat|``."""
    Y, Yhat = _pair(Y, Yhat)
    if not 0 < quantile <= 1:
        raise ValueError("quantile must lie in (0, 1]")
    d = Y.shape[1]
    keep = math.ceil(quantile * d - 1e-9)
    order = np.argsort(-np.abs(Yhat), axis=1, kind="stable")[:, :keep]
    rows = np.arange(Y.shape[0])[:, None]
    return np.mean(np.sign(Yhat[rows, order]) * Y[rows, order], axis=1)


def sharpe_ratio(pnl, annualization: float) -> float:
    pnl = np.asarray(pnl, dtype=float)
    sd = float(pnl.std(ddof=1)) if len(pnl) > 1 else 0.0
    if sd == 0.0:
        raise DegenerateVarianceError("degenerate-variance: PnL has zero standard deviation")
    return math.sqrt(annualization) * float(pnl.mean()) / sd


def pnl_sharpe(Y, Yhat, quantile: float = DEFAULT_QUANTILE, annualization: float | None = None):
    """Returns ``(pnl_series, pnl_total, sharpe)``.

    A zero-variance PnL raises :class:`DegenerateVarianceError`, which still
    carries ``pnl_series`` and ``pnl_total``.
    """
    annualization = default_annualization() if annualization is None else annualization
    pnl = pnl_series(Y, Yhat, quantile)
    total = float(pnl.sum())
    try:
        sharpe = sharpe_ratio(pnl, annualization)
    except DegenerateVarianceError as exc:
        raise DegenerateVarianceError(str(exc), pnl, total) from None
    return pnl, total, sharpe


def _safe_tstat(Y, Yhat, w, lag):
    betas = beta_series(Y, Yhat, w)
    try:
        return newey_west_tstat(betas, lag)
    except (DegenerateVarianceError, InvalidDimensionError):
        return math.nan


def evaluate(Y, Yhat, weights=None, nw_lag: int | None = None, quantile: float = DEFAULT_QUANTILE,
             annualization: float | None = None) -> EvalReport:
    """All report metrics; uniform weights when ``weights`` is None."""
    Y, Yhat = _pair(Y, Yhat)
    nw_lag = default_nw_lag() if nw_lag is None else nw_lag
    per_day, corr, flagged = daily_corr(Y, Yhat)
    w = np.ones_like(Y) if weights is None else weights
    _, w_corr, _ = weighted_corr(Y, Yhat, w)
    try:
        pnl, total, sharpe = pnl_sharpe(Y, Yhat, quantile, annualization)
    except DegenerateVarianceError as exc:
        pnl, total, sharpe = exc.pnl_series, exc.pnl_total, math.nan
    return EvalReport(
        corr=corr,
        w_corr=w_corr,
        t_stat=_safe_tstat(Y, Yhat, None, nw_lag),
        w_t_stat=_safe_tstat(Y, Yhat, w, nw_lag),
        pnl_series=pnl,
        pnl_total=total,
        sharpe=sharpe,
        n_days=len(pnl),
        flagged_days=tuple(int(t) for t in np.flatnonzero(flagged)),
    )


def rescale_daily(F):
    """Scale every day (row) to unit cross-sectional standard deviation; flat rows become 0."""
    F = np.asarray(F, dtype=float)
    _, norm, flat = center_rows(F)
    sd = norm / math.sqrt(F.shape[1])
    return np.where(flat[:, None], 0.0, F / np.where(flat, 1.0, sd)[:, None])


def consolidate(fs: ForecastSet) -> np.ndarray:
    """t-statistic weighted blend of daily-rescaled forecasts, rescaled again."""
    tstats = np.asarray(fs.in_sample_tstats, dtype=float)
    if not np.any(tstats != 0):
        raise DegenerateWeightsError("degenerate-weights: all t-statistics are zero")
    blend = sum(w * rescale_daily(f) for w, f in zip(tstats, fs.forecasts))
    return rescale_daily(blend)
