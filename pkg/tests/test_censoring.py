import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voifilter.agent import AgentState, covariance_update, primal_update
from voifilter.censoring import (
    CensorConfig,
    GaussianBelief,
    aggregate,
    baseline_propagate,
    gaussian_kl,
    voi_decision,
)
from voifilter.checks import kl_quadrature, random_primal_instance, random_spd
from voifilter.models import Sensor, SensorKind, cv_model, linearize
from voifilter.window import build_stacked, initial_window

seeds = st.integers(0, 2**31 - 1)


def _belief(rng, n):
    return GaussianBelief(rng.normal(size=n), random_spd(rng, n, float(rng.uniform(0.1, 5))))


def test_kl_hand_cases():
    assert gaussian_kl(GaussianBelief([0.0], [[1.0]]), GaussianBelief([1.0], [[1.0]])) == pytest.approx(0.5, abs=1e-15)
    want = 0.5 * (2 - 1 - math.log(2))
    assert gaussian_kl(GaussianBelief([0.0], [[2.0]]), GaussianBelief([0.0], [[1.0]])) == pytest.approx(want, abs=1e-15)
    assert want == pytest.approx(0.15343, abs=1e-5)


def test_kl_matches_quadrature():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m1, m2 = rng.normal(size=2)
        v1, v2 = rng.uniform(0.2, 3, size=2)
        kl = gaussian_kl(GaussianBelief([m1], [[v1]]), GaussianBelief([m2], [[v2]]))
        assert kl == pytest.approx(kl_quadrature(m1, v1, m2, v2), abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 8))
def test_kl_self_zero_and_nonnegative(seed, n):
    rng = np.random.default_rng(seed)
    p, q = _belief(rng, n), _belief(rng, n)
    assert gaussian_kl(p, p) == pytest.approx(0.0, abs=1e-12)
    assert gaussian_kl(p, q) >= 0.0


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 5))
def test_kl_against_dense_formula(seed, n):
    rng = np.random.default_rng(seed)
    p, q = _belief(rng, n), _belief(rng, n)
    Si = np.linalg.inv(q.cov)
    d = q.mean - p.mean
    want = 0.5 * (np.trace(Si @ p.cov) + d @ Si @ d - n + np.log(np.linalg.det(q.cov) / np.linalg.det(p.cov)))
    assert gaussian_kl(p, q) == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_kl_increasing_in_mean_gap():
    rng = np.random.default_rng(1)
    S = random_spd(rng, 3)
    u = rng.normal(size=3)
    vals = [gaussian_kl(GaussianBelief(t * u, S), GaussianBelief(np.zeros(3), S)) for t in np.linspace(0, 3, 10)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_kl_block_additivity(seed):
    rng = np.random.default_rng(seed)
    parts_p = [(rng.normal(size=3), random_spd(rng, 3)), (rng.normal(size=2), None), (rng.normal(size=1), None)]
    parts_q = [(rng.normal(size=3), random_spd(rng, 3)), (rng.normal(size=2), None), (rng.normal(size=1), None)]
    p, q = GaussianBelief.stacked(parts_p), GaussianBelief.stacked(parts_q)
    per_block = sum(
        gaussian_kl(GaussianBelief(mp, np.eye(mp.size) if Sp is None else Sp),
                    GaussianBelief(mq, np.eye(mq.size) if Sq is None else Sq))
        for (mp, Sp), (mq, Sq) in zip(parts_p, parts_q)
    )
    dense = gaussian_kl(GaussianBelief(p.mean, p.cov), GaussianBelief(q.mean, q.cov))
    assert gaussian_kl(p, q) == pytest.approx(per_block, rel=1e-10, abs=1e-12)
    assert gaussian_kl(p, q) == pytest.approx(dense, rel=1e-10, abs=1e-12)


def test_identity_blocks_reduce_to_half_squared_gap():
    a, b = np.array([1.0, 2.0, -1.0]), np.array([0.5, 2.0, 1.0])
    p = GaussianBelief.stacked([(a, None)])
    q = GaussianBelief.stacked([(b, None)])
    assert gaussian_kl(p, q) == pytest.approx(0.5 * np.sum((a - b) ** 2), rel=1e-15)


def test_kl_errors():
    with pytest.raises(ValueError):
        gaussian_kl(GaussianBelief(np.zeros(2), np.eye(2)), GaussianBelief(np.zeros(3), np.eye(3)))
    with pytest.raises(ValueError):
        gaussian_kl(GaussianBelief(np.zeros(2), -np.eye(2)), GaussianBelief(np.zeros(2), np.eye(2)))
    with pytest.raises(ValueError):
        GaussianBelief(np.zeros(2), np.eye(3))


def test_aggregate_dimensions():
    n, H = 4, 2
    N = n * (H + 1)
    rng = np.random.default_rng(2)
    P = random_spd(rng, N)
    y = aggregate(np.zeros(N), P, np.ones(N))
    assert y.dim == 2 * N
    y1 = aggregate(np.zeros(N), P, np.ones(N), [0.3])
    assert y1.dim == 2 * N + 1
    cov = y1.cov
    assert np.array_equal(cov[:N, :N], P)
    assert np.array_equal(cov[N:, N:], np.eye(N + 1))
    assert np.array_equal(cov[:N, N:], np.zeros((N, N + 1)))
    assert y1.mean[-1] == 0.3


def _agent(rng, H=2):
    N = 4 * (H + 1)
    w = initial_window(rng.normal(size=4) * 10, np.diag([25.0, 4, 25, 4]), H)
    return AgentState(0, w, rng.normal(size=N))


def test_baseline_equals_actual_without_news():
    rng = np.random.default_rng(3)
    model = cv_model(1.0)
    ag = _agent(rng)
    rho = 0.5
    sys = build_stacked(model, None, ag.window)
    actual = aggregate(primal_update(ag, sys, rho, []), covariance_update(sys), ag.lam, [0.2])
    base = baseline_propagate(ag, model, rho, [0.2])
    send, voi = voi_decision(actual, base, CensorConfig(1e-9))
    assert voi == pytest.approx(0.0, abs=1e-12)
    assert not send


def test_baseline_positive_voi_with_measurement():
    rng = np.random.default_rng(4)
    model = cv_model(1.0)
    ag = _agent(rng)
    s = Sensor(0, SensorKind.LINEAR, (0, 0), 1.0)
    meas = linearize(s, ag.window.tail, ag.window.tail[[0, 2]] + 5.0)
    sys = build_stacked(model, meas, ag.window)
    actual = aggregate(primal_update(ag, sys, 1.0, []), covariance_update(sys), ag.lam)
    base = baseline_propagate(ag, model, 1.0)
    assert gaussian_kl(actual, base) > 0.1


def test_baseline_keeps_dual_and_state():
    rng = np.random.default_rng(5)
    ag = _agent(rng)
    lam0, mean0 = ag.lam.copy(), ag.window.mean.copy()
    base = baseline_propagate(ag, cv_model(1.0), 1.0)
    N = ag.window.dim
    assert np.array_equal(base.mean[N:], lam0)
    assert np.array_equal(ag.lam, lam0)
    assert np.array_equal(ag.window.mean, mean0)


def test_baseline_accepts_prebuilt_system():
    rng = np.random.default_rng(6)
    model = cv_model(1.0)
    ag = _agent(rng)
    s = Sensor(0, SensorKind.LINEAR, (0, 0), 1.0)
    sys = build_stacked(model, linearize(s, ag.window.tail, np.array([1.0, 2.0])), ag.window)
    a = baseline_propagate(ag, model, 1.0, sys=sys)
    b = baseline_propagate(ag, model, 1.0)
    assert np.allclose(a.mean, b.mean, rtol=1e-12)
    assert np.allclose(a.cov, b.cov, rtol=1e-12)


def test_voi_decision_rules():
    p = GaussianBelief([0.0], [[1.0]])
    q = GaussianBelief([1.0], [[1.0]])
    assert voi_decision(p, p, CensorConfig(0.0))[0]
    assert voi_decision(p, q, CensorConfig(0.5)) == (True, 0.5)
    assert voi_decision(p, q, CensorConfig(0.5000001))[0] is False
    send, voi = voi_decision(p, q, CensorConfig(math.inf))
    assert not send and voi == 0.5


def test_censor_config_validation():
    with pytest.raises(ValueError):
        CensorConfig(-0.1)
    with pytest.raises(ValueError):
        CensorConfig(float("nan"))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_gamma_zero_always_transmits(seed):
    rng = np.random.default_rng(seed)
    state, sys, rho, _ = random_primal_instance(rng, 1)
    actual = aggregate(primal_update(state, sys, rho, []), covariance_update(sys), state.lam)
    base = baseline_propagate(state, None, rho, sys=sys)
    assert voi_decision(actual, base, CensorConfig(0.0))[0]
