"""Executable oracle cross-checks behind ``voifilter validate``.

Each check builds seeded random instances, compares a library routine
against an independent reference, and reports the worst discrepancy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize, stats

from .agent import (AgentState, MissionSpec, mission_gradient, mission_objective, primal_gradient,
                    primal_objective, primal_update, primal_update_mission)
from .censoring import GaussianBelief, gaussian_kl
from .models import Measurement, ProcessModel, Sensor, SensorKind, cv_model
from .netsim import SimConfig, build_graph, make_world, run_round
from .oracle import BatchProblem, centralized_kf, solve_batch_map
from .window import RollingWindow, build_stacked


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: worst {self.worst:.3e} (tol {self.tol:.0e})"


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    B = rng.normal(size=(n, n))
    return scale * (B @ B.T / n + 0.5 * np.eye(n))


def random_primal_instance(rng: np.random.Generator, horizon: int, n_neighbors: int | None = None):
    """Random agent, stacked system and neighbor means on a CV model."""
    model = cv_model(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.1, 2.0)))
    n = model.n
    N = n * (horizon + 1)
    window = RollingWindow(rng.normal(size=N), random_spd(rng, N), n)
    Hm = rng.normal(size=(2, n))
    z = rng.normal(size=2)
    meas = Measurement(sensor_id=0, value=z, H=Hm, R=random_spd(rng, 2), pseudo_obs=z)
    sys = build_stacked(model, meas, window)
    d = int(rng.integers(0, 4)) if n_neighbors is None else n_neighbors
    nbrs = [rng.normal(size=N) for _ in range(d)]
    state = AgentState(0, window, rng.normal(size=N), tuple(range(1, d + 1)))
    rho = float(10 ** rng.uniform(-1, 1))
    return state, sys, rho, nbrs


def check_primal(instances: int = 100, seed: int = 0) -> CheckResult:
    """Closed-form primal vs BFGS on the primal objective, plus stationarity."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(instances):
        H = int(rng.integers(1, 4))
        state, sys, rho, nbrs = random_primal_instance(rng, H)
        x = primal_update(state, sys, rho, nbrs)
        args = (sys, state.lam, rho, state.window.mean, nbrs)
        ref = optimize.minimize(primal_objective, np.zeros_like(x), args=args, jac=primal_gradient,
                                method="BFGS", options={"gtol": 1e-11, "maxiter": 10000}).x
        err = float(np.max(np.abs(x - ref)) / (1.0 + np.max(np.abs(ref))))
        g = float(np.linalg.norm(primal_gradient(x, *args)))
        worst = max(worst, err)
        ok &= err <= 1e-6 and g <= 1e-8 * (1.0 + np.linalg.norm(sys.r))
    return CheckResult("primal update vs numeric minimizer", ok, worst, 1e-6)


def random_mission_instance(rng: np.random.Generator):
    """H=1 primal instance plus a position mission that is active at the plain solution."""
    state, sys, rho, nbrs = random_primal_instance(rng, 1)
    n = state.n
    M = np.zeros((2, 2 * n))
    M[0, n], M[1, n + 2] = 1.0, 1.0
    x_plain = primal_update(state, sys, rho, nbrs)
    m = M @ x_plain + 2.0 * rng.normal(size=2)
    mission = MissionSpec(state.id, float(rng.uniform(0.1, 1.0)), M, m)
    phi = float(rng.uniform(0.0, 1.0))
    rho_mission = float(10 ** rng.uniform(-1, 1))
    return state, sys, rho, nbrs, mission, phi, rho_mission, x_plain


def check_mission(instances: int = 50, seed: int = 3) -> CheckResult:
    """Gauss-Newton mission primal vs BFGS on the penalized objective."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        state, sys, rho, nbrs, mission, phi, rm, x_plain = random_mission_instance(rng)
        sol = primal_update_mission(state, sys, rho, mission, nbrs, phi, tol=1e-12, max_iter=100, rho_mission=rm)
        args = (sys, state.lam, rho, state.window.mean, nbrs, mission, phi, rm)
        ref = optimize.minimize(mission_objective, x_plain, args=args, jac=mission_gradient,
                                method="BFGS", options={"gtol": 1e-10, "maxiter": 20000})
        worst = max(worst, abs(mission_objective(sol.x, *args) - ref.fun))
    return CheckResult("mission primal vs numeric minimizer", worst <= 1e-5, worst, 1e-5)


def consensus_disagreement(rho: float, seed: int = 0, iters: int = 500) -> float:
    """Max pairwise gap between agents' primal iterates after ``iters`` ADMM steps.

    Static problem: one sampling instant on a complete 5-node graph with
    direct-position sensors, censoring off, iterates exchanged every step.
    """
    rng = np.random.default_rng(seed)
    model = ProcessModel(cv_model(0.1).A, 0.5 * np.eye(4), 0.1)
    pos = {i: (100.0 * np.cos(0.4 * np.pi * i), 100.0 * np.sin(0.4 * np.pi * i)) for i in range(5)}
    sensors = [Sensor(i, SensorKind.LINEAR, pos[i], float(np.sqrt(0.5) * rng.uniform(0.7, 1.4))) for i in range(5)]
    graph = build_graph(pos, edges=[(i, j) for i in range(5) for j in range(i + 1, 5)])
    P0 = 0.5 * rng.uniform(0.5, 2.0) * np.eye(4)
    x0 = rng.normal(size=4)
    world = make_world(model, sensors, graph, x0, x0 + rng.normal(size=4), P0, 1,
                       SimConfig(rho=rho, gamma=0.0, inner_iters=iters), rng)
    run_round(world)
    xs = list(world.last_primal.values())
    return float(max(np.max(np.abs(a - b)) for a in xs for b in xs))


def random_linear_problem(rng: np.random.Generator, steps: int = 20) -> BatchProblem:
    """CV target observed by a direct-position sensor at every step."""
    model = cv_model(1.0, 0.5)
    H = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
    R = np.diag([4.0, 4.0])
    x = rng.normal(size=4)
    meas = []
    for _ in range(steps):
        x = model.A @ x + rng.multivariate_normal(np.zeros(4), model.Q)
        meas.append((H @ x + rng.normal(scale=2.0, size=2), H, R))
    return BatchProblem(np.zeros(4), np.diag([25.0, 4.0, 25.0, 4.0]), model, meas)


def check_batch_vs_kf(instances: int = 10, seed: int = 1) -> CheckResult:
    """Final Kalman state vs final block of the batch MAP trajectory."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        p = random_linear_problem(rng)
        traj, _ = solve_batch_map(p)
        xs, _ = centralized_kf(p)
        worst = max(worst, float(np.linalg.norm(xs[-1] - traj[-1]) / np.linalg.norm(traj[-1])))
    return CheckResult("batch MAP final state vs Kalman filter", worst <= 1e-8, worst, 1e-8)


def kl_quadrature(m1: float, v1: float, m2: float, v2: float) -> float:
    """KL(N(m1, v1) || N(m2, v2)) by adaptive quadrature."""
    p, q = stats.norm(m1, np.sqrt(v1)), stats.norm(m2, np.sqrt(v2))
    width = 12.0 * np.sqrt(max(v1, v2))
    f = lambda t: p.pdf(t) * (p.logpdf(t) - q.logpdf(t))
    val, _ = integrate.quad(f, min(m1, m2) - width, max(m1, m2) + width, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(val)


def check_kl(instances: int = 20, seed: int = 2) -> CheckResult:
    """Closed-form 1-D KL vs numeric quadrature, including the hand cases."""
    rng = np.random.default_rng(seed)
    cases = [(0.0, 1.0, 1.0, 1.0), (0.0, 2.0, 0.0, 1.0)]
    cases += [(rng.normal(), rng.uniform(0.2, 3), rng.normal(), rng.uniform(0.2, 3)) for _ in range(instances)]
    worst = 0.0
    for m1, v1, m2, v2 in cases:
        kl = gaussian_kl(GaussianBelief([m1], [[v1]]), GaussianBelief([m2], [[v2]]))
        worst = max(worst, abs(kl - kl_quadrature(m1, v1, m2, v2)))
    return CheckResult("Gaussian KL vs quadrature", worst <= 1e-6, worst, 1e-6)


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "primal": check_primal,
    "mission": check_mission,
    "batch_kf": check_batch_vs_kf,
    "kl": check_kl,
}


def run_checks() -> list[CheckResult]:
    return [fn() for fn in CHECKS.values()]
