import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voifilter.models import (
    LinearizationError,
    Sensor,
    SensorKind,
    cv_model,
    jacobian,
    linearize,
    measure,
    observe,
    propagate_truth,
    wrap_angle,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)


def test_cv_model_delta_one():
    m = cv_model(1.0)
    assert np.array_equal(m.A[0], [1, 1, 0, 0])
    assert np.allclose(m.Q[:2, :2], [[1 / 3, 1 / 2], [1 / 2, 1]], atol=0, rtol=1e-15)
    assert np.array_equal(m.Q[:2, 2:], np.zeros((2, 2)))


def test_cv_model_delta_two():
    m = cv_model(2.0)
    assert np.allclose(m.Q[:2, :2], [[8 / 3, 2], [2, 2]], rtol=1e-15)
    assert np.allclose(m.Q[2:, 2:], [[8 / 3, 2], [2, 2]], rtol=1e-15)


def test_cv_model_tiny_delta():
    m = cv_model(1e-9)
    assert np.allclose(m.Q, 0, atol=1e-8)
    assert np.allclose(m.A, np.eye(4), atol=1e-8)


@pytest.mark.parametrize("delta", [0.0, -1.0])
def test_cv_model_rejects_nonpositive(delta):
    with pytest.raises(ValueError):
        cv_model(delta)


def test_q_scale_multiplies():
    assert np.allclose(cv_model(1.5, 0.3).Q, 0.3 * cv_model(1.5).Q)


@given(st.floats(1e-3, 50))
def test_q_symmetric_psd(delta):
    Q = cv_model(delta).Q
    assert np.array_equal(Q, Q.T)
    np.linalg.cholesky(Q + 1e-12 * np.eye(4))


def test_q_inv_cached():
    m = cv_model(1.0)
    assert m.Q_inv is m.Q_inv
    assert np.allclose(m.Q_inv @ m.Q, np.eye(4))


def test_propagate_truth_noiseless():
    m = cv_model(1.0, 0.0)
    out = propagate_truth(m, np.array([0.0, 1, 0, 0]), np.random.default_rng(0))
    assert np.array_equal(out, [1, 1, 0, 0])


def test_propagate_truth_deterministic():
    m = cv_model(1.0)
    x = np.array([1.0, 2, 3, 4])
    a = propagate_truth(m, x, np.random.default_rng(7))
    b = propagate_truth(m, x, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_process_noise_covariance():
    m = cv_model(1.0)
    rng = np.random.default_rng(1)
    zero = np.zeros(4)
    w = np.array([propagate_truth(m, zero, rng) for _ in range(100_000)])
    emp = np.cov(w.T)
    # 5% per entry, on the scale of the diagonal for the zero cross-axis blocks
    scale = np.sqrt(np.outer(np.diag(m.Q), np.diag(m.Q)))
    assert np.all(np.abs(emp - m.Q) <= 0.05 * scale)


def test_toa_345():
    s = Sensor(0, "toa", (0, 0), 1e-12)
    z = measure(s, np.array([3.0, 0, 4.0, 0]), np.random.default_rng(0))
    assert z[0] == pytest.approx(5.0, abs=1e-9)


def test_doa_x_over_y_convention():
    s = Sensor(0, "doa", (0, 0), 1e-12)
    z = measure(s, np.array([1.0, 0, 1.0, 0]), np.random.default_rng(0))
    assert z[0] == pytest.approx(np.pi / 4, abs=1e-9)
    # target due east of the sensor sits at +pi/2 from the y axis
    assert observe(s, np.array([1.0, 0, 0.0, 0]))[0] == pytest.approx(np.pi / 2)


def test_out_of_range():
    s = Sensor(0, "toa", (0, 0), 30.0, 1250.0)
    assert measure(s, np.array([1300.0, 0, 0, 0]), np.random.default_rng(0)) is None


def test_doa_on_sensor_is_out_of_range():
    s = Sensor(0, "doa", (5, 5), 0.05)
    assert measure(s, np.array([5.0, 0, 5.0, 0]), np.random.default_rng(0)) is None


def test_measure_consumes_same_randomness_out_of_range():
    s = Sensor(0, "toa", (0, 0), 1.0, 10.0)
    r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
    measure(s, np.array([100.0, 0, 0, 0]), r1)
    measure(s, np.array([1.0, 0, 0, 0]), r2)
    assert r1.random() == r2.random()


@pytest.mark.parametrize("kw", [dict(noise_std=0.0), dict(noise_std=1.0, sensing_range=0.0)])
def test_sensor_validation(kw):
    with pytest.raises(ValueError):
        Sensor(0, "toa", (0, 0), **kw)


def test_toa_jacobian_unit_vector():
    s = Sensor(0, "toa", (0, 0), 1.0)
    H = jacobian(s, np.array([3.0, 9, 4.0, -2]))
    assert np.allclose(H, [[0.6, 0, 0.8, 0]])


@pytest.mark.parametrize("kind", ["toa", "doa"])
def test_jacobian_matches_central_differences(kind):
    rng = np.random.default_rng(11)
    s = Sensor(0, kind, (120.0, -40.0), 1.0)
    for _ in range(20):
        x = rng.normal(scale=500, size=4)
        H = jacobian(s, x)
        fd = np.zeros_like(H)
        h = 1e-6
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            fd[:, k] = (observe(s, x + e) - observe(s, x - e)) / (2 * h)
        assert np.allclose(H, fd, rtol=1e-5, atol=1e-5 * np.abs(H).max())


def test_linear_sensor_fixed_point():
    s = Sensor(0, SensorKind.LINEAR, (0, 0), 2.0)
    raw = np.array([10.0, -3.0])
    meas = linearize(s, np.array([1.0, 2, 3, 4]), raw)
    assert np.array_equal(meas.pseudo_obs, raw)
    x = np.array([5.0, 1, -2, 0])
    assert np.array_equal(observe(s, x), meas.H @ x)


def test_linearize_pseudo_obs_is_first_order():
    s = Sensor(0, "toa", (0, 0), 1.0)
    x = np.array([300.0, 0, 400.0, 0])
    meas = linearize(s, x, observe(s, x))
    assert np.allclose(meas.pseudo_obs, meas.H @ x)


def test_doa_residual_wraps():
    s = Sensor(0, "doa", (0, 0), 0.05)
    # linearization point just across the +-pi seam from the raw bearing
    x_lin = np.array([-1.0, 0, -1000.0, 0])
    raw = np.array([np.pi - 1e-3])
    meas = linearize(s, x_lin, raw)
    resid = meas.pseudo_obs - meas.H @ x_lin
    assert abs(resid[0]) < 0.01


def test_linearize_degenerate():
    s = Sensor(0, "doa", (1.0, 2.0), 0.05)
    with pytest.raises(LinearizationError):
        linearize(s, np.array([1.0, 0, 2.0, 0]), np.array([0.0]))


@given(finite, finite)
def test_wrap_angle_bound(a, b):
    w = wrap_angle(a - b)
    assert -np.pi < w <= np.pi


def test_wrap_angle_edges():
    assert wrap_angle(np.pi) == np.pi
    assert wrap_angle(-np.pi) == np.pi
    assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_measurement_stream_deterministic(seed):
    s = Sensor(0, "doa", (0, 0), 0.05)
    x = np.array([100.0, 0, 50.0, 0])
    a = [measure(s, x, np.random.default_rng(seed)) for _ in range(2)]
    assert np.array_equal(a[0], a[1])
