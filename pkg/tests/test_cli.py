import subprocess
import sys

import numpy as np
import pytest

from conftest import orthonormal_signals
from lik._rng import make_rng
from lik.cli import main
from lik.matio import read_matrix, write_matrix
from lik.synth import read_panel


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def panel_dir(tmp_path):
    out = tmp_path / "panel"
    assert run("generate", "--d", 20, "--n", 300, "--n-test", 60, "--k", 3, "--g", "demo",
               "--seed", 1, "--out", out) == 0
    return out


def _csv_rows(path):
    return [line.split(",") for line in path.read_text().splitlines()]


def test_generate_shapes_and_determinism(tmp_path, panel_dir):
    Y = read_matrix(panel_dir / "Y.csv")
    assert Y.shape == (300, 20)
    assert read_matrix(panel_dir / "test" / "Y.csv").shape == (60, 20)
    assert {p.name for p in panel_dir.iterdir()} >= {"Y.csv", "X_f0.csv", "X_f1.csv", "X_f2.csv",
                                                      "K_true.csv", "meta.txt"}
    again = tmp_path / "again"
    run("generate", "--d", 20, "--n", 300, "--n-test", 60, "--k", 3, "--g", "demo", "--seed", 1,
        "--out", again)
    for name in ("Y.csv", "X_f1.csv", "K_true.csv", "meta.txt", "test/Y.csv"):
        assert (panel_dir / name).read_bytes() == (again / name).read_bytes()


def test_generate_size_1000_by_100(tmp_path):
    assert run("generate", "--d", 100, "--n", 1000, "--seed", 0, "--out", tmp_path / "p") == 0
    rows = _csv_rows(tmp_path / "p" / "Y.csv")
    assert len(rows) == 1000 and {len(r) for r in rows} == {100}


def test_generate_from_config_file(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("[model]\nd = 8\n[data]\nn_train = 40\nseed = 3\n")
    assert run("generate", "--config", cfg, "--out", tmp_path / "p") == 0
    assert read_matrix(tmp_path / "p" / "Y.csv").shape == (40, 8)
    cfg.write_text("unknown_key = 1\n")
    assert run("generate", "--config", cfg, "--out", tmp_path / "q") == 1


def test_estimate_k_noise_free_rank(tmp_path, capsys):
    d = 10
    Q, _ = np.linalg.qr(make_rng(0).standard_normal((d, 2)))
    K = (Q * np.array([4.0, 1.5])) @ Q.T
    write_matrix(tmp_path / "Y.csv", orthonormal_signals(200, d, seed=1) @ K)
    assert run("estimate-k", "--panel", tmp_path) == 0
    assert "rank_star=2" in capsys.readouterr().out
    spectrum = read_matrix(tmp_path / "spectrum.csv")
    assert spectrum.shape == (d, 2) and list(spectrum[:, 0]) == list(range(1, d + 1))
    assert np.all(np.diff(spectrum[:, 1]) <= 0)
    assert np.linalg.norm(read_matrix(tmp_path / "K_hat.csv") - K) <= 1e-8


def test_estimate_k_exit_codes(tmp_path, panel_dir, capsys):
    assert run("estimate-k", "--panel", tmp_path / "missing") == 1
    assert run("estimate-k", "--panel", panel_dir, "--delta", "auto") == 0
    assert run("estimate-k", "--panel", panel_dir, "--delta", "1e9") == 2
    assert "gap-not-found" in capsys.readouterr().err


def test_estimate_k_hints(tmp_path, capsys):
    write_matrix(tmp_path / "h1.csv", np.zeros((3, 3)))
    write_matrix(tmp_path / "h2.csv", np.eye(3))
    write_matrix(tmp_path / "Y.csv", np.zeros((2, 3)))
    assert run("estimate-k", "--panel", tmp_path, "--hints",
               f"{tmp_path / 'h1.csv'},{tmp_path / 'h2.csv'}", "--betas", "3,5") == 0
    np.testing.assert_array_equal(read_matrix(tmp_path / "K_hat.csv"), 5 * np.eye(3))


def test_fit_predict_evaluate_pipeline(tmp_path, panel_dir):
    assert run("estimate-k", "--panel", panel_dir) == 0
    k_hat = panel_dir / "K_hat.csv"
    model = tmp_path / "pvel"
    assert run("fit-g", "--panel", panel_dir, "--method", "pvel", "--k-hat", k_hat,
               "--rounds", 50, "--out", model) == 0
    rounds = np.loadtxt(model / "rounds.csv", delimiter=",", skiprows=1)
    assert rounds.shape == (51, 2) and np.all(np.diff(rounds[:, 1]) <= 1e-9)
    header = _csv_rows(model / "model.csv")[0]
    assert header == ["round", "j1", "j2", "j3", "b1", "b2", "b3", "b4", "b5", "b6"]
    assert run("predict", "--model", model, "--panel", panel_dir / "test", "--k-hat", k_hat,
               "--out", tmp_path / "yhat.csv") == 0
    assert run("evaluate", "--y", panel_dir / "test" / "Y.csv", "--yhat", tmp_path / "yhat.csv",
               "--out", tmp_path / "ev") == 0
    report = dict((k, float(v)) for k, v in _csv_rows(tmp_path / "ev" / "report.csv"))
    assert list(report) == ["corr", "w_corr", "t_stat", "w_t_stat", "pnl_total", "sharpe", "n_days"]
    assert report["corr"] > 0 and report["n_days"] == 60
    pnl = np.loadtxt(tmp_path / "ev" / "pnl.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(pnl[:, 2], np.cumsum(pnl[:, 1]), atol=1e-12)
    assert report["pnl_total"] == pytest.approx(pnl[:, 1].sum())


def test_fit_g_predict_matches_train_forecast(tmp_path, panel_dir):
    for method in ("pvel", "linear", "nparam"):
        out = tmp_path / method
        assert run("fit-g", "--panel", panel_dir, "--method", method, "--k-hat", "identity",
                   "--rounds", 5, "--out", out) == 0
        assert run("predict", "--model", out, "--panel", panel_dir, "--k-hat", "identity",
                   "--out", out / "again.csv") == 0
        np.testing.assert_allclose(read_matrix(out / "again.csv"), read_matrix(out / "yhat_train.csv"),
                                   rtol=1e-12, atol=1e-14)
    assert len(_csv_rows(tmp_path / "linear" / "model.csv")) == 2


def test_fit_g_nparam_zero_signal(tmp_path):
    panel = tmp_path / "zero"
    run("generate", "--d", 15, "--n", 400, "--g", "zero", "--sigma-xi", 0, "--out", panel)
    out = tmp_path / "np"
    assert run("fit-g", "--panel", panel, "--method", "nparam", "--k-hat", panel / "K_true.csv",
               "--ell", 4, "--out", out) == 0
    table = np.loadtxt(out / "g_hat.csv", delimiter=",", skiprows=1)
    assert _csv_rows(out / "g_hat.csv")[0] == ["bin", "left", "right", "mu", "n_used"]
    assert table.shape == (4, 5) and np.all(table[:, 3] == 0.0)


def test_fit_g_nparam_no_signal_exit(tmp_path, panel_dir, capsys):
    assert run("fit-g", "--panel", panel_dir, "--method", "nparam", "--k-hat", "identity",
               "--features", 0, "--c", 1e9, "--out", tmp_path / "np") == 2
    assert "no-signal" in capsys.readouterr().err


def test_evaluate_perfect_and_mismatch(tmp_path, capsys):
    Y = make_rng(2).standard_normal((30, 10))
    write_matrix(tmp_path / "Y.csv", Y)
    write_matrix(tmp_path / "bad.csv", Y[:, :9])
    assert run("evaluate", "--y", tmp_path / "Y.csv", "--yhat", tmp_path / "Y.csv",
               "--out", tmp_path / "ev") == 0
    assert "corr=1" in capsys.readouterr().out
    assert run("evaluate", "--y", tmp_path / "Y.csv", "--yhat", tmp_path / "bad.csv",
               "--out", tmp_path / "ev2") == 1


def test_consolidate_cli(tmp_path):
    rng = make_rng(3)
    F1, F2 = rng.standard_normal((20, 8)), 4 * rng.standard_normal((20, 8))
    write_matrix(tmp_path / "f1.csv", F1)
    write_matrix(tmp_path / "f2.csv", F2)
    assert run("consolidate", "--forecast", tmp_path / "f1.csv", "--forecast", tmp_path / "f2.csv",
               "--tstats", "3,5", "--out", tmp_path / "c.csv") == 0
    from lik.evalkit import daily_corr, rescale_daily
    blend = 3 * rescale_daily(F1) + 5 * rescale_daily(F2)
    np.testing.assert_allclose(daily_corr(read_matrix(tmp_path / "c.csv"), blend)[0], 1.0, atol=1e-12)
    assert run("consolidate", "--forecast", tmp_path / "f1.csv", "--tstats", "2",
               "--out", tmp_path / "one.csv") == 0
    np.testing.assert_allclose(read_matrix(tmp_path / "one.csv"), rescale_daily(F1), atol=1e-15)
    write_matrix(tmp_path / "f3.csv", F1[:, :5])
    assert run("consolidate", "--forecast", tmp_path / "f1.csv", "--forecast", tmp_path / "f3.csv",
               "--tstats", "1,1", "--out", tmp_path / "x.csv") == 1
    assert run("consolidate", "--forecast", tmp_path / "f1.csv", "--out", tmp_path / "x.csv") == 1


def test_consolidate_reads_reports(tmp_path):
    rng = make_rng(4)
    for i, t in enumerate((3.0, 5.0)):
        write_matrix(tmp_path / f"f{i}.csv", rng.standard_normal((10, 6)))
        (tmp_path / f"r{i}.csv").write_text(f"corr,0.1\nt_stat,{t}\n")
    assert run("consolidate", "--forecast", tmp_path / "f0.csv", "--forecast", tmp_path / "f1.csv",
               "--report", tmp_path / "r0.csv", "--report", tmp_path / "r1.csv",
               "--out", tmp_path / "c.csv") == 0


def test_sweep(tmp_path):
    out = tmp_path / "sweep.csv"
    assert run("sweep", "--stage", "kestim", "--axis", "n", "--values", "250,1000,4000",
               "--seeds", "0,1", "--d", 40, "--out", out) == 0
    rows = _csv_rows(out)
    assert rows[0][0] == "n" and "gram_error" in rows[0]
    col = rows[0].index("gram_error")
    errs = [float(r[col]) for r in rows[1:]]
    assert errs[0] > errs[1] > errs[2]
    assert run("sweep", "--stage", "gest", "--axis", "ell", "--values", "10,20,50", "--seeds", "0",
               "--d", 30, "--n", 2000, "--out", tmp_path / "g.csv") == 0
    assert "sup_error" in _csv_rows(tmp_path / "g.csv")[0]
    assert run("sweep", "--stage", "kestim", "--axis", "n", "--values", "", "--out", out) == 1
    assert run("sweep", "--stage", "kestim", "--axis", "colour", "--values", "1", "--out", out) == 1


def test_usage_errors():
    assert run() == 1
    assert run("nope") == 1
    assert run("fit-g", "--panel", "x") == 1


def test_thread_limit_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LIK_THREADS", "1")
    assert run("generate", "--d", 5, "--n", 10, "--out", tmp_path / "p") == 0
    monkeypatch.setenv("LIK_THREADS", "lots")
    assert run("generate", "--d", 5, "--n", 10, "--out", tmp_path / "q") == 1


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lik.cli", "estimate-k", "--panel", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 1


def test_panel_roundtrip_via_cli(panel_dir):
    panel = read_panel(panel_dir)
    assert panel.X.shape == (300, 20, 3)
    resid = panel.Y - panel.S @ read_matrix(panel_dir / "K_true.csv")
    assert resid.std() == pytest.approx(1.0, rel=0.05)  # default sigma_xi
