"""Command-line driver: ``lik <subcommand> ...``.

Exit codes: 0 success, 1 IO or usage problems, 2 typed algorithmic failures
(gap-not-found, no-signal, degenerate-variance, ...).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evalkit, experiments, gest, kestim, pvel
from .config import ConfigError, ExperimentConfig, convert_value, load_config
from .errors import AlgorithmError, LikError, NoSignalError
from .matio import FLOAT_FMT, read_matrix, write_matrix
from .synth import generate_panel, read_panel, write_panel

log = logging.getLogger("lik")

EXIT_OK, EXIT_USAGE, EXIT_ALGO = 0, 1, 2
NO_SIGNAL_RETRIES = 4

# command-line flag -> config key
FLAG_KEYS = {
    "d": "d", "r": "r", "n": "n_train", "n_test": "n_test", "k": "k", "seed": "seed",
    "sigma_xi": "sigma_xi", "snr": "snr", "g": "g", "kernel": "kernel", "sigma": "sigma",
    "ell": "ell", "c": "c", "eta": "eta", "rounds": "rounds", "delta": "delta",
    "nw_lag": "nw_lag", "quantile": "quantile", "horizon": "horizon",
}
SWEEP_AXES = {"n": "n_train", "n_train": "n_train", "n_test": "n_test", "d": "d", "r": "r",
              "sigma_xi": "sigma_xi", "sigma": "sigma", "ell": "ell", "c": "c", "eta": "eta",
              "rounds": "rounds", "k": "k", "delta": "delta", "quantile": "quantile"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [] if header is None else [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else _fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _config_from(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    changes = {}
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = convert_value(key, value)
    return cfg.replace(**changes)


def _add_config_flags(p, *flags):
    p.add_argument("--config", help="key = value config file")
    for flag in flags:
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, default=None)


def _load_k_hat(spec, d):
    if spec == "identity":
        return np.eye(d)
    K = read_matrix(spec)
    if K.shape != (d, d):
        raise LikError(f"K_hat has shape {K.shape}, panel has {d} entities")
    return K


def _write_report(path, report):
    _write_rows(path, None, [(name, value) for name, value in report.as_rows()])


def _read_report_tstat(path):
    for line in Path(path).read_text().splitlines():
        name, _, value = line.partition(",")
        if name.strip() == "t_stat":
            return float(value)
    raise LikError(f"{path}: no t_stat row")


# -- subcommands --------------------------------------------------------

def cmd_generate(args):
    cfg = _config_from(args)
    model = cfg.latent_model()
    train_seed, test_seed = experiments.panel_seeds(cfg.seed)
    out = Path(args.out)
    write_panel(out, generate_panel(model, cfg.n_train, cfg.k, train_seed), model, cfg.seed)
    if cfg.n_test > 0:
        write_panel(out / "test", generate_panel(model, cfg.n_test, cfg.k, test_seed), model, cfg.seed)
    print(f"wrote panel d={cfg.d} n={cfg.n_train} k={cfg.k} to {out}")
    return EXIT_OK


def cmd_estimate_k(args):
    cfg = _config_from(args)
    panel_dir = Path(args.panel)
    out = Path(args.out) if args.out else panel_dir
    hints = args.hints.split(",") if args.hints else list(cfg.hints)
    if hints:
        betas = [float(b) for b in args.betas.split(",")] if args.betas else list(cfg.betas)
        hs = kestim.HintSet([read_matrix(h) for h in hints], betas,
                            args.exponentiate or cfg.exponentiate)
        est = kestim.hint_consolidate(hs)
    else:
        est = kestim.estimate_k_dd(read_matrix(panel_dir / "Y.csv"), cfg.delta)
    write_matrix(out / "K_hat.csv", est.K_hat)
    spec = est.spectrum_used.eigenvalues
    _write_rows(out / "spectrum.csv", None, [(i + 1, lam) for i, lam in enumerate(spec)])
    print(f"rank_star={est.rank_star} delta={_fmt(est.delta)}")
    return EXIT_OK


def _fit_nparam(panel, K_hat, cfg, features, out):
    X = panel.X[:, :, features]
    partition = gest.build_partition(X.reshape(-1, len(features)), cfg.ell)
    c = cfg.c
    for attempt in range(NO_SIGNAL_RETRIES + 1):
        fit = gest.estimate_g(X, panel.Y, K_hat, partition, c, seed=cfg.seed)
        if not fit.no_signal or attempt == NO_SIGNAL_RETRIES:
            break
        c /= 2.0
        log.warning("no-signal in %d cells; retrying with c=%g", len(fit.no_signal), c)
    if len(fit.no_signal) == partition.ell:
        raise NoSignalError(f"no-signal: every cell failed down to c={c:g}")
    header = ["bin"]
    for a in range(partition.k):
        header += [f"left_{a}", f"right_{a}"] if partition.k > 1 else ["left", "right"]
    header += ["mu", "n_used"]
    rows = []
    for j in range(partition.ell):
        bounds = [v for lohi in fit.partition.cell_bounds(j) for v in lohi]
        rows.append([j, *bounds, fit.mu[j], int(fit.n_used[j])])
    _write_rows(out / "g_hat.csv", header, rows)
    for a, edges in enumerate(partition.edges):
        write_matrix(out / f"edges_{a}.csv", edges)
    meta = {"method": "nparam", "features": ",".join(map(str, features)), "c": _fmt(c),
            "no_signal": ",".join(map(str, fit.no_signal))}
    return fit, meta


def _fit_boost(panel, K_hat, cfg, method, out):
    linear = method == "linear"
    eta, rounds = (1.0, 1) if linear else (cfg.eta, cfg.rounds)
    model = pvel.boost(panel.Y, panel.X, K_hat, eta, rounds, interactions=not linear)
    rows = [[m + 1, *learner.idx, *learner.beta] for m, learner in enumerate(model.learners)]
    _write_rows(out / "model.csv", ["round", "j1", "j2", "j3", "b1", "b2", "b3", "b4", "b5", "b6"], rows)
    _write_rows(out / "rounds.csv", ["round", "mse"], list(enumerate(model.train_mse)))
    meta = {"method": method, "eta": _fmt(eta), "k": str(model.k), "rounds": str(rounds)}
    return model, meta


def _write_meta(path, meta):
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in meta.items()))


def _read_meta(path):
    meta = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return meta


def _load_model(model_dir):
    model_dir = Path(model_dir)
    meta = _read_meta(model_dir / "model.txt")
    if meta["method"] == "nparam":
        features = [int(f) for f in meta["features"].split(",")]
        edges = []
        while (model_dir / f"edges_{len(edges)}.csv").exists():
            edges.append(read_matrix(model_dir / f"edges_{len(edges)}.csv").ravel())
        part = gest.PartitionSpec(tuple(edges))
        table = np.loadtxt(model_dir / "g_hat.csv", delimiter=",", skiprows=1, ndmin=2)
        fit = gest.PiecewiseG(part, table[:, -2].copy(), float(meta["c"]), table[:, -1].astype(int))
        return "nparam", (fit, features)
    table = np.loadtxt(model_dir / "model.csv", delimiter=",", skiprows=1, ndmin=2)
    learners = tuple(pvel.LinearLearner(tuple(int(j) for j in row[1:4]), row[4:10].copy())
                     for row in table)
    return meta["method"], pvel.BoostedModel(learners, float(meta["eta"]), int(meta["k"]))


def _predict(kind, fitted, X, K_hat):
    if kind == "nparam":
        fit, features = fitted
        return gest.predict_nparam(fit, X[:, :, features], K_hat)
    return pvel.predict(fitted, X, K_hat)


def cmd_fit_g(args):
    cfg = _config_from(args)
    panel = read_panel(args.panel)
    K_hat = _load_k_hat(args.k_hat, panel.d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "nparam":
        features = [int(f) for f in args.features.split(",")] if args.features else list(range(panel.k))
        fitted, meta = _fit_nparam(panel, K_hat, cfg, features, out)
        fitted = (fitted, features)
    else:
        fitted, meta = _fit_boost(panel, K_hat, cfg, args.method, out)
    _write_meta(out / "model.txt", meta)
    yhat = _predict(args.method if args.method == "nparam" else "boost", fitted, panel.X, K_hat)
    write_matrix(out / "yhat_train.csv", yhat)
    report = evalkit.evaluate(panel.Y, yhat, nw_lag=cfg.lag, quantile=cfg.quantile,
                              annualization=cfg.annualization)
    _write_report(out / "train_report.csv", report)
    print(f"method={args.method} in-sample corr={report.corr:.6f} t_stat={report.t_stat:.4f}")
    return EXIT_OK


def cmd_predict(args):
    panel = read_panel(args.panel)
    K_hat = _load_k_hat(args.k_hat, panel.d)
    kind, fitted = _load_model(args.model)
    write_matrix(args.out, _predict("nparam" if kind == "nparam" else "boost", fitted, panel.X, K_hat))
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _config_from(args)
    Y = read_matrix(args.y)
    Yhat = read_matrix(args.yhat)
    if Y.shape != Yhat.shape:
        raise LikError(f"shape mismatch Y={Y.shape}, Yhat={Yhat.shape}")
    weights = args.weights or cfg.weights or None
    W = read_matrix(weights) if weights else None
    report = evalkit.evaluate(Y, Yhat, W, nw_lag=cfg.lag, quantile=cfg.quantile,
                              annualization=cfg.annualization)
    out = Path(args.out)
    _write_report(out / "report.csv", report)
    cum = np.cumsum(report.pnl_series)
    _write_rows(out / "pnl.csv", ["day", "pnl", "cumulative"],
                [(t, p, s) for t, (p, s) in enumerate(zip(report.pnl_series, cum))])
    for name, value in report.as_rows():
        print(f"{name}={_fmt(value)}")
    return EXIT_OK


def cmd_consolidate(args):
    forecasts = [read_matrix(p) for p in args.forecast]
    if args.tstats:
        tstats = [float(t) for t in args.tstats.split(",")]
    elif args.report:
        tstats = [_read_report_tstat(p) for p in args.report]
    else:
        raise UsageError("need --tstats or one --report per forecast")
    if len({f.shape for f in forecasts}) != 1:
        raise LikError("forecast matrices differ in shape")
    fs = evalkit.ForecastSet(forecasts, tstats, list(args.forecast))
    write_matrix(args.out, evalkit.consolidate(fs))
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config_from(args)
    if args.axis not in SWEEP_AXES:
        raise UsageError(f"unknown sweep axis {args.axis!r}; choose from {sorted(SWEEP_AXES)}")
    key = SWEEP_AXES[args.axis]
    values = [v for v in (args.values or "").split(",") if v.strip()]
    if not values:
        raise UsageError("empty value list")
    seeds = [int(s) for s in args.seeds.split(",")]
    stage = experiments.STAGES[args.stage]
    kwargs = {"k_hat": args.k_hat} if args.k_hat and args.stage != "kestim" else {}
    rows, header = [], None
    for raw in values:
        runs = [stage(cfg.replace(**{key: convert_value(key, raw), "seed": s}), **kwargs) for s in seeds]
        metrics = sorted(runs[0])
        header = header or [args.axis, *metrics]
        rows.append([raw.strip(), *(float(np.mean([r[m] for r in runs])) for m in metrics)])
        log.info("%s=%s done", args.axis, raw)
    _write_rows(args.out, header, rows)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="lik", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic panel")
    _add_config_flags(g, "d", "r", "n", "n_test", "k", "seed", "sigma_xi", "snr", "g", "kernel", "sigma")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate-k", help="estimate the Gram matrix from Y.csv")
    _add_config_flags(e, "delta")
    e.add_argument("--panel", required=True)
    e.add_argument("--out")
    e.add_argument("--hints", help="comma-separated hint matrix files")
    e.add_argument("--betas", help="comma-separated hint weights")
    e.add_argument("--exponentiate", action="store_true")
    e.set_defaults(func=cmd_estimate_k)

    f = sub.add_parser("fit-g", help="fit g with nparam, pvel or linear")
    _add_config_flags(f, "ell", "c", "eta", "rounds", "seed", "nw_lag", "quantile", "horizon")
    f.add_argument("--panel", required=True)
    f.add_argument("--method", choices=("nparam", "pvel", "linear"), required=True)
    f.add_argument("--k-hat", dest="k_hat", required=True, help="K_hat.csv path or 'identity'")
    f.add_argument("--features", help="nparam: comma-separated feature indices")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit_g)

    pr = sub.add_parser("predict", help="forecast a panel with a fitted model")
    pr.add_argument("--model", required=True, help="directory written by fit-g")
    pr.add_argument("--panel", required=True)
    pr.add_argument("--k-hat", dest="k_hat", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    v = sub.add_parser("evaluate", help="score a forecast matrix")
    _add_config_flags(v, "nw_lag", "quantile", "horizon")
    v.add_argument("--y", required=True)
    v.add_argument("--yhat", required=True)
    v.add_argument("--weights")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("consolidate", help="t-statistic weighted blend of forecasts")
    c.add_argument("--forecast", action="append", required=True)
    c.add_argument("--report", action="append", help="in-sample report.csv per forecast")
    c.add_argument("--tstats", help="comma-separated t-statistics")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_consolidate)

    s = sub.add_parser("sweep", help="metric table over one config axis")
    _add_config_flags(s, "d", "r", "n", "n_test", "k", "sigma_xi", "snr", "g", "kernel", "sigma",
                      "ell", "c", "eta", "rounds", "delta", "quantile")
    s.add_argument("--stage", choices=sorted(experiments.STAGES), required=True)
    s.add_argument("--axis", required=True)
    s.add_argument("--values", default="")
    s.add_argument("--seeds", default="0,1,2,3,4")
    s.add_argument("--k-hat", dest="k_hat", choices=("dd", "identity", "true"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def _thread_limit():
    raw = os.environ.get("LIK_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"LIK_THREADS must be an integer, got {raw!r}") from None
    return n if n > 0 else None


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        limit = _thread_limit()
        if limit is None:
            return args.func(args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=limit):
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AlgorithmError as exc:
        msg = str(exc)
        print(msg if msg.startswith(exc.code) else f"{exc.code}: {msg}", file=sys.stderr)
        return EXIT_ALGO
    except (ConfigError, LikError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
