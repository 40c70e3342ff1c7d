"""Per-agent ADMM machinery for the distributed windowed MAP filter.

An agent owns a rolling-window estimate, the aggregated consensus dual
``lam`` (one entry per stacked window coordinate) and a map of mission
duals keyed by mission owner. The primal step minimizes

    J(x) + lam.x + rho * sum_j ||x - (x_i + x_j) / 2||^2
         [+ rho/2 * max(0, g(x) - c + phi)^2   for mission owners]

where ``J(x) = ||C x - r||^2_{W^-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .window import RollingWindow, StackedSystem, symmetrize


@dataclass
class NeighborInfo:
    """Last payload received from one neighbor."""

    mean: np.ndarray
    cov: np.ndarray
    phi: dict[int, float] = field(default_factory=dict)


@dataclass
class MissionSpec:
    """Quadratic requirement ``g(x) = ||M x - m||^2 <= c`` owned by one agent."""

    owner: int
    c: float
    M: np.ndarray | None = None
    m: np.ndarray | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("mission requirement level c must be positive")
        if self.M is not None and not np.any(self.M):
            raise ValueError("mission matrix M must be nonzero")

    def g(self, x: np.ndarray) -> float:
        e = self.M @ x - self.m
        return float(e @ e)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.M.T @ (self.M @ x - self.m)


@dataclass
class AgentState:
    id: int
    window: RollingWindow
    lam: np.ndarray
    neighbors: tuple[int, ...] = ()
    phi: dict[int, float] = field(default_factory=dict)
    neighbor_cache: dict[int, NeighborInfo] = field(default_factory=dict)
    # mission duals as they stood before the last neighbor merge
    phi_ref: dict[int, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.window.n

    def cached_means(self) -> list[np.ndarray]:
        return [self.neighbor_cache[j].mean for j in self.neighbors if j in self.neighbor_cache]


# -- primal ---------------------------------------------------------------

def _consensus_terms(x_own: np.ndarray, neighbor_means, rho: float):
    d = len(neighbor_means)
    pull = np.zeros_like(x_own)
    for xj in neighbor_means:
        pull += x_own + xj
    return d, rho * pull


def primal_objective(x, sys: StackedSystem, lam, rho, x_own, neighbor_means) -> float:
    """Value of the plain (mission-free) primal objective at ``x``."""
    val = sys.cost(x) + float(lam @ x)
    for xj in neighbor_means:
        e = x - 0.5 * (x_own + xj)
        val += rho * float(e @ e)
    return val


def primal_gradient(x, sys: StackedSystem, lam, rho, x_own, neighbor_means) -> np.ndarray:
    g = 2.0 * (sys.info @ x - sys.info_vec) + lam
    for xj in neighbor_means:
        g += 2.0 * rho * (x - 0.5 * (x_own + xj))
    return g


def primal_update(state: AgentState, sys: StackedSystem, rho: float,
                  neighbor_means=None) -> np.ndarray:
    """Closed-form minimizer of the plain primal objective.

    Solves ``(2 C'W^-1 C + 2 rho d I) x = 2 C'W^-1 r - lam + rho sum_j (x_i + x_j)``
    with ``d`` the number of neighbor means supplied (defaults to the cache).
    """
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if neighbor_means is None:
        neighbor_means = state.cached_means()
    x_own = state.window.mean
    d, pull = _consensus_terms(x_own, neighbor_means, rho)
    lhs = 2.0 * sys.info + 2.0 * rho * d * np.eye(sys.dim)
    rhs = 2.0 * sys.info_vec - state.lam + pull
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("primal normal matrix is singular") from exc


def mission_objective(x, sys, lam, rho, x_own, neighbor_means, mission: MissionSpec, phi: float,
                      rho_mission: float | None = None) -> float:
    rm = rho if rho_mission is None else rho_mission
    s = max(0.0, mission.g(x) - mission.c + phi)
    return primal_objective(x, sys, lam, rho, x_own, neighbor_means) + 0.5 * rm * s * s


def mission_gradient(x, sys, lam, rho, x_own, neighbor_means, mission: MissionSpec, phi: float,
                     rho_mission: float | None = None) -> np.ndarray:
    rm = rho if rho_mission is None else rho_mission
    s = max(0.0, mission.g(x) - mission.c + phi)
    return primal_gradient(x, sys, lam, rho, x_own, neighbor_means) + rm * s * mission.grad(x)


@dataclass
class MissionSolve:
    x: np.ndarray
    converged: bool
    iterations: int


def primal_update_mission(state: AgentState, sys: StackedSystem, rho: float, mission: MissionSpec,
                          neighbor_means=None, phi: float | None = None,
                          tol: float = 1e-8, max_iter: int = 20,
                          rho_mission: float | None = None) -> MissionSolve:
    """Mission-aware primal step by damped Gauss-Newton.

    The penalty ``rho/2 * max(0, g(x) - c + phi)^2`` is linearized around the
    current iterate. When the hinge residual is positive its second-order
    term ``rho * s * hess(g)`` is PSD and is kept, which restores quadratic
    convergence; otherwise the plain Gauss-Newton matrix is used. A
    backtracking line search keeps the true objective non-increasing, so the
    result is never worse than the plain primal solution it starts from.
    ``rho_mission`` scales the mission penalty separately from the consensus
    penalty (defaults to ``rho``).
    """
    if neighbor_means is None:
        neighbor_means = state.cached_means()
    if phi is None:
        phi = state.phi.get(mission.owner, 0.0)
    lam, x_own = state.lam, state.window.mean
    rm = rho if rho_mission is None else rho_mission
    args = (sys, lam, rho, x_own, neighbor_means, mission, phi, rm)

    d, _ = _consensus_terms(x_own, neighbor_means, rho)
    base = 2.0 * sys.info + 2.0 * rho * d * np.eye(sys.dim)
    hess_g = 2.0 * mission.M.T @ mission.M

    x = primal_update(state, sys, rho, neighbor_means)
    f = mission_objective(x, *args)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        s = mission.g(x) - mission.c + phi
        grad = mission_gradient(x, *args)
        if s <= 0:
            # penalty inactive at this iterate
            lhs = base
        else:
            b = mission.grad(x)
            lhs = base + rm * np.outer(b, b) + rm * s * hess_g
        step = -np.linalg.solve(lhs, grad)
        t = 1.0
        while True:
            x_new = x + t * step
            f_new = mission_objective(x_new, *args)
            if f_new <= f + 1e-4 * t * float(grad @ step) or t < 1e-10:
                break
            t *= 0.5
        moved = np.linalg.norm(x_new - x)
        if f_new <= f:
            x, f = x_new, f_new
        if moved <= tol * (1.0 + np.linalg.norm(x)):
            converged = True
            break
    return MissionSolve(x=x, converged=converged, iterations=it)


def covariance_update(sys: StackedSystem) -> np.ndarray:
    """Window covariance ``(C'W^-1 C)^-1``, symmetrized."""
    try:
        P = np.linalg.inv(sys.info)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("window information matrix is singular") from exc
    return symmetrize(P)


# -- duals ----------------------------------------------------------------

def dual_update(lam: np.ndarray, rho: float, x_own: np.ndarray, neighbor_means) -> np.ndarray:
    """``lam + rho * sum_j (x_i - x_j)``."""
    out = np.array(lam, dtype=float, copy=True)
    for xj in neighbor_means:
        out += rho * (x_own - xj)
    return out


def mission_dual_update(phi: float, rho: float, g_val: float, c: float) -> float:
    """Projected ascent ``max(0, phi + rho (g - c))``."""
    if phi < 0:
        raise ValueError("mission dual must be non-negative")
    return max(0.0, phi + rho * (g_val - c))


def shift_dual(lam: np.ndarray, n: int) -> np.ndarray:
    """Re-index a window dual after the window rolls.

    The dropped state's multiplier is discarded and the newly appended state
    starts from zero, like any freshly introduced constraint.
    """
    return np.concatenate([lam[n:], np.zeros(n)])


# -- fusion ---------------------------------------------------------------

def _checked_inv(P: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(symmetrize(P))
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def logop_merge(own_mean, own_cov, received, normalize: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Log-linear pooling of Gaussian window beliefs.

    Information matrices add (unit weights); the mean is the
    information-weighted average. With ``normalize=True`` every belief gets
    weight ``1 / (1 + len(received))`` instead, the convex pool that does not
    double count information shared between neighbors.

    Parameters
    ----------
    own_mean, own_cov : ndarray
        The agent's own window belief.
    received : iterable of (mean, cov)
        Beliefs received from neighbors this round.
    normalize : bool, optional
        Use convex instead of unit pooling weights.

    Returns
    -------
    mean, cov : ndarray
        Merged prior belief.
    """
    received = list(received)
    info = _checked_inv(own_cov)
    info_vec = info @ own_mean
    for mean_j, cov_j in received:
        Ij = _checked_inv(cov_j)
        info = info + Ij
        info_vec = info_vec + Ij @ mean_j
    if normalize:
        w = 1.0 / (1 + len(received))
        info, info_vec = w * info, w * info_vec
    cov = symmetrize(np.linalg.inv(symmetrize(info)))
    return cov @ info_vec, cov


def phi_consensus(agent_id: int, own_phi: dict[int, float], received: list[dict[int, float]]) -> dict[int, float]:
    """Average-consensus merge of mission duals.

    An owner keeps its own dual; other entries become the mean over the
    neighbors that reported that owner this round (unchanged if none did).
    """
    out = dict(own_phi)
    owners = set(own_phi)
    for r in received:
        owners.update(r)
    for owner in sorted(owners):
        if owner == agent_id:
            continue
        vals = [r[owner] for r in received if owner in r]
        if vals:
            out[owner] = float(np.mean(vals))
    return out
