"""Centralized reference estimators.

These see every measurement in the network and serve as ground truth for
the distributed filter: the batch MAP trajectory, the Kalman filter, and a
centralized rolling-window solve sharing the window rules of
:mod:`voifilter.window`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import block_diag

from .models import Measurement, ProcessModel
from .window import RollingWindow, advance_window, build_stacked, initial_window, symmetrize

# (z, H, R) for one sampling instant, or None when nothing was observed
StepMeasurement = tuple[np.ndarray, np.ndarray, np.ndarray] | None


@dataclass
class BatchProblem:
    """Linear-Gaussian trajectory problem over steps ``0..K``.

    ``measurements[k - 1]`` holds the concatenated observation of step ``k``.
    """

    prior_mean: np.ndarray
    prior_cov: np.ndarray
    model: ProcessModel
    measurements: Sequence[StepMeasurement]

    @property
    def steps(self) -> int:
        return len(self.measurements)

    @property
    def n(self) -> int:
        return self.model.n


def stack_measurements(parts: Sequence[Measurement]) -> StepMeasurement:
    """Concatenate per-sensor measurements into one centralized observation."""
    parts = [p for p in parts if p is not None]
    if not parts:
        return None
    z = np.concatenate([p.pseudo_obs for p in parts])
    H = np.vstack([p.H for p in parts])
    R = block_diag(*[p.R for p in parts])
    return z, H, R


def _normal_equations(p: BatchProblem):
    n, K = p.n, p.steps
    N = n * (K + 1)
    info = np.zeros((N, N))
    vec = np.zeros(N)
    P0inv = np.linalg.inv(p.prior_cov)
    info[:n, :n] += P0inv
    vec[:n] += P0inv @ p.prior_mean
    A, Qinv = p.model.A, np.linalg.inv(p.model.Q)
    for k in range(1, K + 1):
        a, b = slice((k - 1) * n, k * n), slice(k * n, (k + 1) * n)
        info[a, a] += A.T @ Qinv @ A
        info[a, b] -= A.T @ Qinv
        info[b, a] -= Qinv @ A
        info[b, b] += Qinv
        m = p.measurements[k - 1]
        if m is not None:
            z, H, R = m
            Rinv = np.linalg.inv(R)
            info[b, b] += H.T @ Rinv @ H
            vec[b] += H.T @ Rinv @ z
    return info, vec


def batch_objective(p: BatchProblem, traj: np.ndarray) -> float:
    """Negative log-posterior (up to constants, times two) of a trajectory."""
    traj = np.asarray(traj, dtype=float).reshape(p.steps + 1, p.n)
    e0 = traj[0] - p.prior_mean
    val = e0 @ np.linalg.solve(p.prior_cov, e0)
    for k in range(1, p.steps + 1):
        e = traj[k] - p.model.A @ traj[k - 1]
        val += e @ np.linalg.solve(p.model.Q, e)
        m = p.measurements[k - 1]
        if m is not None:
            z, H, R = m
            r = z - H @ traj[k]
            val += r @ np.linalg.solve(R, r)
    return float(val)


def solve_batch_map(p: BatchProblem) -> tuple[np.ndarray, np.ndarray]:
    """MAP trajectory ``x_{0:K}`` (shape ``(K+1, n)``) and its joint covariance."""
    info, vec = _normal_equations(p)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("batch normal equations are singular") from exc
    traj = np.linalg.solve(info, vec)
    return traj.reshape(p.steps + 1, p.n), symmetrize(cov)


def centralized_kf(p: BatchProblem) -> tuple[np.ndarray, np.ndarray]:
    """Kalman filter over the centralized observations.

    Returns filtered means ``(K+1, n)`` and covariances ``(K+1, n, n)``,
    index 0 being the prior.
    """
    x = np.asarray(p.prior_mean, dtype=float).copy()
    P = np.asarray(p.prior_cov, dtype=float).copy()
    A, Q = p.model.A, p.model.Q
    xs, Ps = [x.copy()], [P.copy()]
    for m in p.measurements:
        x = A @ x
        P = A @ P @ A.T + Q
        if m is not None:
            z, H, R = m
            S = H @ P @ H.T + R
            K = np.linalg.solve(S, H @ P).T
            x = x + K @ (z - H @ x)
            I_KH = np.eye(len(x)) - K @ H
            # Joseph form keeps P symmetric PD
            P = I_KH @ P @ I_KH.T + K @ R @ K.T
        P = symmetrize(P)
        xs.append(x.copy())
        Ps.append(P.copy())
    return np.array(xs), np.array(Ps)


def rwt_filter(prior_mean, prior_cov, model: ProcessModel, horizon: int, steps: int,
               measure_fn: Callable[[int, np.ndarray], StepMeasurement]) -> list[RollingWindow]:
    """Sequential rolling-window MAP with a single information source.

    ``measure_fn(k, x_lin)`` returns the step-``k`` observation linearized
    about ``x_lin`` (the predicted newest state), or ``None``.
    """
    window = initial_window(prior_mean, prior_cov, horizon)
    out = []
    for k in range(1, steps + 1):
        m = measure_fn(k, window.tail)
        meas = None
        if m is not None:
            z, H, R = m
            meas = Measurement(sensor_id=-1, value=z, H=H, R=R, pseudo_obs=z)
        sys = build_stacked(model, meas, window)
        cov = symmetrize(np.linalg.inv(sys.info))
        mean = cov @ sys.info_vec
        solved = RollingWindow(mean, cov, window.n)
        out.append(solved)
        window = advance_window(solved, model)
    return out


def centralized_rwt(p: BatchProblem, horizon: int) -> list[RollingWindow]:
    """Rolling-window estimates for steps ``1..K`` on a linear batch problem."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    return rwt_filter(p.prior_mean, p.prior_cov, p.model, horizon, p.steps,
                      lambda k, _x: p.measurements[k - 1])
