"""End-to-end runs on synthetic panels, shared by ``lik sweep`` and the tests."""
from __future__ import annotations

import numpy as np

from . import evalkit, gest, kestim, pvel
from ._rng import make_rng
from .synth import generate_panel

TRAIN_SEED_OFFSET = 1
TEST_SEED_OFFSET = 2


def panel_seeds(seed):
    """(train, test) panel seeds derived from the latent-model seed."""
    return seed + TRAIN_SEED_OFFSET, seed + TEST_SEED_OFFSET


def true_cell_means(g, partition, axes=(0,), draws=1_000_000, seed=7):
    """Monte-Carlo ``E[g(x) | x in cell]`` under uniform features."""
    X = make_rng(seed).uniform(-1.0, 1.0, size=(draws, g.k))
    cells = partition.cell_index(X[:, list(axes)])
    sums = np.bincount(cells, weights=g(X), minlength=partition.ell)
    counts = np.bincount(cells, minlength=partition.ell)
    return sums / np.maximum(counts, 1)


def sup_error(mu_hat, mu_true):
    return float(np.max(np.abs(np.asarray(mu_hat) - np.asarray(mu_true))))


def resolve_k_hat(which, Y_train, K_true):
    if which == "dd":
        return kestim.estimate_k_dd(Y_train).K_hat
    if which == "identity":
        return np.eye(K_true.shape[0])
    if which == "true":
        return K_true
    raise ValueError(f"unknown K_hat source {which!r}")


def run_kestim(cfg):
    model = cfg.latent_model()
    train_seed, _ = panel_seeds(cfg.seed)
    panel = generate_panel(model, cfg.n_train, cfg.k, train_seed)
    est = kestim.estimate_k_dd(panel.Y, cfg.delta)
    return {
        "gram_error": kestim.gram_error(est.K_hat, model.K),
        "cov_error": kestim.covariance_error(panel.Y, model.K),
        "rank_star": est.rank_star,
        "delta": est.delta,
    }


def run_gest(cfg, k_hat="true"):
    """Cell-mean recovery on feature 0 with a known-CDF uniform partition."""
    model = cfg.latent_model()
    train_seed, _ = panel_seeds(cfg.seed)
    panel = generate_panel(model, cfg.n_train, cfg.k, train_seed)
    partition = gest.PartitionSpec.uniform(cfg.ell)
    K_hat = resolve_k_hat(k_hat, panel.Y, model.K)
    fit = gest.estimate_g(panel.X[:, :, :1], panel.Y, K_hat, partition, cfg.c, seed=cfg.seed)
    mu_true = true_cell_means(model.g_true, partition)
    mu_true = mu_true - mu_true.mean()
    return {
        "sup_error": sup_error(fit.mu, mu_true),
        "n_kept_min": int(fit.n_used.min()),
        "no_signal_cells": len(fit.no_signal),
    }


def run_pvel(cfg, k_hat="dd"):
    """Out-of-sample evaluation of boosting on a train/test split."""
    model = cfg.latent_model()
    train_seed, test_seed = panel_seeds(cfg.seed)
    train = generate_panel(model, cfg.n_train, cfg.k, train_seed)
    test = generate_panel(model, max(cfg.n_test, cfg.lag + 2), cfg.k, test_seed)
    K_hat = resolve_k_hat(k_hat, train.Y, model.K)
    fitted = pvel.boost(train.Y, train.X, K_hat, cfg.eta, cfg.rounds)
    rep = evalkit.evaluate(test.Y, pvel.predict(fitted, test.X, K_hat), nw_lag=cfg.lag,
                           quantile=cfg.quantile, annualization=cfg.annualization)
    return {
        "oos_corr": rep.corr,
        "oos_t_stat": rep.t_stat,
        "oos_sharpe": rep.sharpe,
        "train_mse": fitted.train_mse[-1],
    }


STAGES = {"kestim": run_kestim, "gest": run_gest, "pvel": run_pvel}
