import numpy as np
import pytest

from lik._rng import make_rng

# criterion id -> (passed, detail) filled in by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return make_rng(12345)


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"[acceptance {criterion}] {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: (int("".join(ch for ch in c if ch.isdigit())), c)):
        ok, detail = ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit:>3}: {'PASS' if ok else 'FAIL'}  {detail}")


def orthonormal_signals(n, d, seed):
    """n x d matrix S with S.T @ S / n == I exactly (up to rounding)."""
    Q, _ = np.linalg.qr(make_rng(seed).standard_normal((n, d)))
    return Q * np.sqrt(n)
