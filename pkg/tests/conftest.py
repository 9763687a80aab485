import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile(
    "default", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=2000)
settings.load_profile("default")


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0, cond: float = 1e3) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-uniform in ``[scale/cond, scale]``."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = scale * np.exp(rng.uniform(-np.log(cond), 0.0, size=n))
    A = (Q * eig) @ Q.T
    return 0.5 * (A + A.T)


@st.composite
def spd_matrices(draw, n: int, scale: float = 1.0, cond: float = 1e3):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_spd(np.random.default_rng(seed), n, scale, cond)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance lines: (criterion, part, passed, detail), printed at the end of the session.
ACCEPTANCE: list = []


def record_acceptance(criterion: int, part: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((criterion, part, bool(passed), detail))
    print(f"criterion {criterion}{' ' + part if part else ''}: {'PASS' if passed else 'FAIL'} | {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    by_crit: dict = {}
    for crit, part, ok, detail in ACCEPTANCE:
        by_crit.setdefault(crit, []).append((part, ok, detail))
    for crit in sorted(by_crit):
        parts = by_crit[crit]
        ok = all(p[1] for p in parts)
        detail = "; ".join((f"[{p}] " if p else "") + f"{d} ({'pass' if o else 'fail'})" for p, o, d in parts)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} | {detail}")
