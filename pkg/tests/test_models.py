import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from safe_imm.estimate import GaussianEstimate
from safe_imm.models import (ModelKind, MotionModel, ca_model, cv_model, map_state, mapping_matrix,
                             measurement_matrix, process_noise, transition_matrix)

dts = st.floats(1e-3, 5.0)


def test_dims_and_validation():
    assert cv_model().state_dim == 6 and ca_model().state_dim == 9
    assert cv_model().meas_dim == 3
    with pytest.raises(ValueError):
        MotionModel(ModelKind.CV, q=0.0)
    with pytest.raises(ValueError):
        transition_matrix(cv_model(), 0.0)
    with pytest.raises(ValueError):
        process_noise(ca_model(), -0.1)


def test_transition_entries():
    F = transition_matrix(cv_model(), 0.1)
    assert F[0, 3] == pytest.approx(0.1)
    assert transition_matrix(ca_model(), 0.1)[0, 6] == pytest.approx(0.005)
    np.testing.assert_allclose(transition_matrix(cv_model(), 1e-12), np.eye(6), atol=1e-11)


def test_process_noise_entries():
    Q = process_noise(cv_model(0.5), 0.1)
    assert Q[3, 3] == pytest.approx(0.05)
    assert Q[0, 0] == pytest.approx(0.5 * 0.1**3 / 3)
    assert Q[0, 3] == pytest.approx(0.5 * 0.1**2 / 2)
    # axes decouple
    assert Q[0, 1] == 0.0 and Q[0, 4] == 0.0
    Qa = process_noise(ca_model(0.2), 0.1)
    assert Qa[0, 6] == pytest.approx(0.2 * 0.1**3 / 6)
    assert np.linalg.eigvalsh(Qa).min() >= -1e-18


def test_returned_matrices_are_read_only():
    F = transition_matrix(cv_model(), 0.1)
    with pytest.raises(ValueError):
        F[0, 0] = 2.0


@given(dts, dts, st.sampled_from([cv_model(), ca_model()]))
def test_transition_semigroup(a, b, m):
    np.testing.assert_allclose(
        transition_matrix(m, a + b), transition_matrix(m, a) @ transition_matrix(m, b), rtol=1e-12, atol=1e-12
    )


@given(st.floats(1e-3, 10.0), st.floats(1e-3, 10.0), st.sampled_from(list(ModelKind)))
def test_process_noise_symmetric_psd(dt, q, kind):
    Q = process_noise(MotionModel(kind, q), dt)
    np.testing.assert_array_equal(Q, Q.T)
    assert np.linalg.eigvalsh(Q).min() >= -1e-12 * np.trace(Q)


def test_measurement_matrix():
    for m in (cv_model(), ca_model()):
        H = measurement_matrix(m)
        np.testing.assert_array_equal(H[:, :3], np.eye(3))
        assert not H[:, 3:].any()
    x = np.zeros(9)
    x[0] = 1.0
    np.testing.assert_array_equal(measurement_matrix(ca_model()) @ x, [1, 0, 0])


def test_map_state_pad_and_truncate():
    est = GaussianEstimate(np.arange(1.0, 7.0), np.eye(6) * 2.0)
    up = map_state(cv_model(), ca_model(), est, pad_variance=25.0)
    np.testing.assert_array_equal(up.mean, [1, 2, 3, 4, 5, 6, 0, 0, 0])
    np.testing.assert_array_equal(np.diag(up.cov)[6:], 25.0)
    assert map_state(cv_model(), cv_model(), est) is est

    acc_only = GaussianEstimate(np.r_[np.zeros(6), 1.0, 2.0, 3.0], np.eye(9))
    down = map_state(ca_model(), cv_model(), acc_only)
    np.testing.assert_array_equal(down.mean, np.zeros(6))
    with pytest.raises(ValueError):
        map_state(ca_model(), cv_model(), est)


def test_mapping_matrix_matches_map_state(rng):
    mean = rng.normal(size=9)
    A = rng.normal(size=(9, 9))
    est = GaussianEstimate(mean, A @ A.T)
    T = mapping_matrix(9, 6)
    down = map_state(ca_model(), cv_model(), est)
    np.testing.assert_array_equal(down.mean, T @ mean)
    np.testing.assert_allclose(down.cov, T @ est.cov @ T.T)


@given(st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6))
def test_roundtrip_restores_shared_block(values):
    est = GaussianEstimate(np.array(values), np.eye(6))
    back = map_state(ca_model(), cv_model(), map_state(cv_model(), ca_model(), est))
    np.testing.assert_array_equal(back.mean, est.mean)
    np.testing.assert_array_equal(back.cov, est.cov)
