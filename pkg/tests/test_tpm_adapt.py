import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import entropy as scipy_entropy

from safe_imm.tpm_adapt import (MIN_ENTRY, AdaptState, TpmConfig, adapt_tpm, blend_weight, glr_statistic,
                                weight_entropy)

BASE = TpmConfig().pi_base


def _state(lls, winners, window=5):
    return AdaptState(window, np.asarray(lls, float), np.asarray(winners))


def test_config_validation():
    with pytest.raises(ValueError):
        TpmConfig(alpha_max=1.5)
    with pytest.raises(ValueError):
        TpmConfig(cap=1.0)
    with pytest.raises(ValueError):
        TpmConfig(g_glr=-0.1)
    with pytest.raises(ValueError):
        TpmConfig(pi_base=[[0.5, 0.6], [0.5, 0.5]])


def test_glr_examples():
    assert glr_statistic(_state([[-1.0, -3.0]] * 4, [0] * 4)) == 0.0
    assert glr_statistic(_state([[0.0, math.log(2.0)]], [0])) == pytest.approx(math.log(2.0))
    with pytest.raises(ValueError):
        glr_statistic(AdaptState(5))


def test_history_window_and_streak():
    s = AdaptState(3)
    for k, win in enumerate([0, 1, 1, 1]):
        s = s.push([0.0, float(k)], win)
    assert s.full and s.count == 3
    assert s.winner_streak() == 3
    s = s.push([0.0, 0.0], 0)
    assert s.winner_streak() == 1
    assert s.loglik_history.shape[0] <= 3


@given(st.lists(st.tuples(st.floats(-20, 0), st.floats(-20, 0)), min_size=1, max_size=5),
       st.integers(0, 4), st.floats(0.0, 5.0))
def test_glr_monotone_in_rival_advantage(rows, k, bump):
    lls = np.array(rows)
    winners = [0] * len(rows)
    k = min(k, len(rows) - 1)
    before = glr_statistic(_state(lls, winners))
    lls2 = lls.copy()
    lls2[k, 1] += bump
    assert glr_statistic(_state(lls2, winners)) >= before - 1e-12
    assert before >= 0.0


def test_entropy_examples():
    assert weight_entropy([1.0, 0.0]) == 0.0
    assert weight_entropy([0.5, 0.5]) == pytest.approx(1.0)
    assert weight_entropy([0.75, 0.25]) == pytest.approx(0.8113, abs=1e-4)


@given(st.lists(st.floats(1e-9, 1.0), min_size=2, max_size=5))
def test_entropy_matches_scipy(p):
    w = np.array(p) / sum(p)
    assert weight_entropy(w) == pytest.approx(scipy_entropy(w) / math.log(len(w)), rel=1e-9, abs=1e-12)


def test_blend_weight_clamp():
    assert blend_weight(TpmConfig(), 10.0, 1.0) == pytest.approx(0.7)
    assert blend_weight(TpmConfig(), 0.0, 0.0) == 0.0


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 1))
def test_blend_weight_monotone_in_glr(g1, g2, h):
    lo, hi = sorted((g1, g2))
    cfg = TpmConfig()
    assert blend_weight(cfg, lo, h) <= blend_weight(cfg, hi, h)


def test_disabled_returns_base():
    cfg = TpmConfig(enabled=False)
    out = adapt_tpm(cfg, _state([[0.0, 5.0]] * 5, [1] * 5), [0.5, 0.5])
    np.testing.assert_array_equal(out, BASE)


def test_no_signal_is_identity():
    # incumbent dominant, one-hot weights, short history: nothing to adapt
    out = adapt_tpm(TpmConfig(), _state([[0.0, -1.0]], [0]), [1.0, 0.0])
    np.testing.assert_allclose(out, BASE, rtol=0, atol=1e-15)


def test_winner_bias_after_streak():
    out = adapt_tpm(TpmConfig(), _state([[0.0, -1.0]] * 2, [0, 0]), [1.0, 0.0])
    assert out[0, 0] > BASE[0, 0]
    np.testing.assert_allclose(out[1], BASE[1], atol=1e-15)


def test_ca_boost_on_evidence_and_cv_boost_when_quiet():
    cfg = TpmConfig(g_glr=0.0, g_ent=0.0, winner_bias=0.0, glr_threshold=0.0)
    onset = adapt_tpm(cfg, _state([[0.0, 1.0]], [0]), [1.0, 0.0])
    assert onset[0, 1] > BASE[0, 1] and onset[1, 1] > BASE[1, 1]
    quiet = adapt_tpm(cfg, _state([[0.0, -1.0]] * 5, [0] * 5), [1.0, 0.0])
    assert quiet[1, 0] > BASE[1, 0]


def test_glr_threshold_gates_ca_boost():
    cfg = TpmConfig(g_glr=0.0, g_ent=0.0, winner_bias=0.0, glr_threshold=2.0)
    small = adapt_tpm(cfg, _state([[0.0, 1.0]], [0]), [1.0, 0.0])
    np.testing.assert_allclose(small, BASE, atol=1e-15)
    large = adapt_tpm(cfg, _state([[0.0, 3.0]], [0]), [1.0, 0.0])
    assert large[0, 1] > BASE[0, 1]


def test_cap_limits_off_diagonals():
    cfg = TpmConfig(cap=0.1, alpha_max=1.0, g_ent=5.0)
    out = adapt_tpm(cfg, _state([[0.0, 5.0]] * 5, [1] * 5), [0.5, 0.5])
    off = out[~np.eye(2, dtype=bool)]
    assert (off <= 0.1 + 1e-12).all()


@st.composite
def fuzz_inputs(draw):
    M = draw(st.integers(2, 4))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    base = rng.dirichlet(np.ones(M) * 0.3, size=M)
    cfg = TpmConfig(
        pi_base=base,
        alpha_max=draw(st.floats(0, 1)),
        g_glr=draw(st.floats(0, 10)),
        g_ent=draw(st.floats(0, 10)),
        winner_bias=draw(st.floats(0, 2)),
        ca_boost=draw(st.floats(0, 2)),
        cv_boost=draw(st.floats(0, 2)),
        cap=draw(st.floats(0.01, 0.99)),
        window=draw(st.integers(1, 6)),
        glr_threshold=draw(st.floats(0, 5)),
        cv_index=0,
        ca_index=M - 1,
    )
    n = draw(st.integers(1, 8))
    lls = rng.normal(scale=rng.uniform(0.1, 1e3), size=(n, M))
    winners = rng.integers(0, M, size=n)
    w = rng.dirichlet(np.ones(M) * 0.2)
    return cfg, AdaptState(cfg.window, lls, winners), w


@given(fuzz_inputs())
def test_output_always_row_stochastic(inputs):
    cfg, state, w = inputs
    out = adapt_tpm(cfg, state, w)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
    assert out.min() >= MIN_ENTRY and out.max() <= 1.0
