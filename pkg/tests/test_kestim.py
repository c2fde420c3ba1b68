import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import orthonormal_signals
from lik._rng import make_rng
from lik.errors import DegenerateSpectrumError, GapNotFoundError, InvalidDimensionError, NumericError
from lik.kestim import (
    HintSet,
    auto_delta,
    covariance_error,
    covariance_target,
    ema_update,
    estimate_k_dd,
    gram_error,
    hint_consolidate,
)
from lik.linalg import Spectrum, eig_sym, low_rank_project
from lik.synth import KernelSpec, LatentModel, SignalFn, generate_panel


def _rank2_psd(d, seed):
    """Diagonally dominant rank-2 PSD matrix with well separated eigenvalues."""
    Q, _ = np.linalg.qr(make_rng(seed).standard_normal((d, 2)))
    return (Q * np.array([5.0, 2.0])) @ Q.T


def test_covariance_target_examples():
    np.testing.assert_array_equal(covariance_target(np.zeros((4, 3))), np.zeros((3, 3)))
    np.testing.assert_array_equal(covariance_target(np.array([[1.0, 2.0]])), [[1, 2], [2, 4]])
    with pytest.raises(NumericError):
        covariance_target(np.array([[np.inf, 1.0]]))


def test_covariance_target_orthonormal_signals():
    K = _rank2_psd(10, 0) + 0.1 * np.eye(10)
    S = orthonormal_signals(200, 10, seed=1)
    C = covariance_target(S @ K)
    assert np.linalg.norm(C - K.T @ K) <= 1e-8 * np.linalg.norm(K.T @ K)


def test_exact_rank2_recovery():
    d = 10
    K = _rank2_psd(d, 2)
    Y = orthonormal_signals(400, d, seed=3) @ K
    gaps = eig_sym(covariance_target(Y)).gaps() / d**2
    for delta in np.linspace(gaps[2] * 1.5 + 1e-12, gaps[1], 5):
        est = estimate_k_dd(Y, delta)
        assert est.rank_star == 2
        P2 = low_rank_project(eig_sym(K), 2)
        assert np.linalg.norm(est.K_hat - P2) <= 1e-6 * np.linalg.norm(P2)
    auto = estimate_k_dd(Y)
    assert auto.rank_star == 2
    assert gram_error(auto.K_hat, K) <= 1e-10


def test_gap_not_found():
    d = 10
    Y = orthonormal_signals(400, d, seed=3) @ _rank2_psd(d, 2)
    top_gap = eig_sym(covariance_target(Y)).gaps()[0]
    with pytest.raises(GapNotFoundError) as info:
        estimate_k_dd(Y, 1.01 * top_gap / d**2)
    assert info.value.largest_gap == pytest.approx(top_gap)
    assert str(info.value).startswith("gap-not-found")


def test_gap_rule_takes_largest_index():
    # gaps 50, 30, 40, ... all above delta * d^2 -> largest qualifying index wins
    lam = np.array([200.0, 150.0, 120.0, 80.0, 0.0])
    spec = Spectrum(lam, np.eye(5))
    delta = 29.0 / 25
    gaps = spec.gaps()
    assert np.flatnonzero(gaps >= delta * 25)[-1] + 1 == 4


def test_estimate_k_dd_invariants():
    model = LatentModel.create(40, 2, KernelSpec.gaussian(1.0),
                               SignalFn.polynomial([[0, 0, 0, 1.0]]).standardized(), 1.0, 0)
    Y = generate_panel(model, 800, 1, seed=1).Y
    est = estimate_k_dd(Y)
    d = 40
    K_hat = est.K_hat
    np.testing.assert_array_equal(K_hat, K_hat.T)
    w = np.sort(np.linalg.eigvalsh(K_hat))[::-1]
    assert w.min() >= -1e-8 * d**2
    assert w[est.rank_star] <= 1e-8 * w[0]
    trunc = low_rank_project(est.spectrum_used, est.rank_star)
    assert np.linalg.norm(K_hat @ K_hat - trunc) <= 1e-6 * np.linalg.norm(trunc)


def test_estimate_k_dd_error_decays_two_sizes():
    g = SignalFn.polynomial([[0, 0, 0, 1.0]]).standardized()
    errs = []
    for n in (500, 5000):
        model = LatentModel.create(100, 2, KernelSpec.gaussian(1.0), g, 1.0, 0)
        errs.append(gram_error(estimate_k_dd(generate_panel(model, n, 1, seed=1).Y).K_hat, model.K))
    assert errs[1] < errs[0]


def test_gram_error_examples():
    K = make_rng(0).standard_normal((5, 5))
    assert gram_error(K, K) == 0.0
    assert gram_error(np.eye(2), np.zeros((2, 2))) == 0.5
    with pytest.raises(InvalidDimensionError):
        gram_error(np.eye(2), np.eye(3))


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 9), seed=st.integers(0, 10_000))
def test_gram_error_double_loop_oracle(d, seed):
    rng = make_rng(seed)
    A, B = rng.standard_normal((d, d)), rng.standard_normal((d, d))
    total = 0.0
    for i in range(d):
        for j in range(d):
            total += (A[i, j] - B[i, j]) ** 2
    assert gram_error(A, B) == pytest.approx(total / d**2, rel=1e-12, abs=1e-12)


def test_covariance_error_exact_panel_is_zero():
    K = _rank2_psd(8, 4)
    Y = orthonormal_signals(100, 8, seed=5) @ K
    assert covariance_error(Y, K) <= 1e-12


def test_auto_delta_worked_spectrum():
    d = 4
    lam = np.array([10.0, 5.0, 1.0, 0.1]) * d**2
    spec = Spectrum(lam, np.eye(d))
    delta = auto_delta(spec, d)
    # gaps (5, 4, 0.9) * d^2; i <= ceil(sqrt(4)) = 2 and gap_2 beats gap_3
    assert delta == pytest.approx(0.99 * 4.0)
    hits = np.flatnonzero(spec.gaps() >= delta * d**2)
    assert hits[-1] + 1 == 2


def test_auto_delta_degenerate():
    with pytest.raises(DegenerateSpectrumError):
        auto_delta(Spectrum(np.full(5, 3.0), np.eye(5)), 5)
    with pytest.raises(DegenerateSpectrumError):
        estimate_k_dd(np.zeros((10, 5)))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 30), d=st.integers(2, 12), seed=st.integers(0, 10_000))
def test_auto_delta_always_succeeds(n, d, seed):
    Y = make_rng(seed).standard_normal((n, d))
    est = estimate_k_dd(Y)
    assert 1 <= est.rank_star < d
    assert est.delta > 0


def test_hint_consolidate_examples():
    H = _rank2_psd(4, 0)
    np.testing.assert_allclose(hint_consolidate(HintSet([H], [1.0])).K_hat, H)
    est = hint_consolidate(HintSet([np.array([[0.0]]), np.array([[1.0]])], [3.0, 5.0]))
    np.testing.assert_array_equal(est.K_hat, [[5.0]])
    assert (est.rank_star, est.delta) == (1, 0.0)
    ones = hint_consolidate(HintSet([H, 2 * H], [0.0, 0.0], exponentiate=True)).K_hat
    np.testing.assert_array_equal(ones, np.ones((4, 4)))


def test_hint_set_validation():
    with pytest.raises(InvalidDimensionError):
        HintSet([np.eye(2), np.eye(3)], [1.0, 1.0])
    with pytest.raises(InvalidDimensionError):
        HintSet([np.eye(2)], [1.0, 2.0])
    with pytest.raises(NumericError):
        HintSet([np.eye(2)], [np.nan])


def test_ema_update_examples():
    A, B = np.eye(2), 3 * np.ones((2, 2))
    np.testing.assert_array_equal(ema_update(A, B, 1), B)
    np.testing.assert_array_equal(ema_update(A, A, 7), A)
    np.testing.assert_array_equal(ema_update(np.array([[0.0]]), np.array([[1.0]]), 3), [[0.5]])
    with pytest.raises(InvalidDimensionError):
        ema_update(np.eye(2), np.eye(3), 2)
    with pytest.raises(ValueError):
        ema_update(A, B, 0)
