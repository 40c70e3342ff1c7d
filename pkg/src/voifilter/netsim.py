"""Synchronous-round network simulation of the censored distributed filter.

Every round runs the same sequence for all agents:

1. the target moves (one draw from the shared stream);
2. each agent senses, in ascending id order, and linearizes about its
   predicted newest state;
3. consensus dual ascent from the previous iterates, then the primal step
   (mission-aware for mission owners), the owner's mission dual step and
   the covariance update;
4. the VoI test against the no-new-information baseline decides whether
   ``(x, P, phi)`` is broadcast;
5. after the delivery barrier, agents refresh their neighbor caches, fuse
   received window beliefs (LogOP), average received mission duals, and
   roll their windows forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import (
    AgentState,
    MissionSpec,
    NeighborInfo,
    covariance_update,
    dual_update,
    logop_merge,
    mission_dual_update,
    phi_consensus,
    primal_update,
    primal_update_mission,
    shift_dual,
)
from .censoring import CensorConfig, aggregate, baseline_propagate, voi_decision
from .models import POS_IDX, LinearizationError, ProcessModel, Sensor, linearize, measure, propagate_truth
from .window import RollingWindow, advance_window, build_stacked, initial_window


@dataclass(frozen=True)
class NetworkGraph:
    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if i not in self.nodes or j not in self.nodes:
                raise ValueError(f"edge ({i}, {j}) references an unknown node")

    @property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj = {i: set() for i in self.nodes}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return {i: tuple(sorted(v)) for i, v in adj.items()}

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adj = self.adjacency
        seen, stack = {self.nodes[0]}, [self.nodes[0]]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == len(self.nodes)


def build_graph(positions: dict[int, np.ndarray], edges=None, radius: float | None = None) -> NetworkGraph:
    """Communication graph from an explicit edge list or a radius rule.

    Exactly one of ``edges`` and ``radius`` must be given. Explicit edges are
    treated as undirected; listing both orientations is allowed.
    """
    nodes = tuple(sorted(positions))
    if (edges is None) == (radius is None):
        raise ValueError("give exactly one of an edge list or a communication radius")
    if edges is not None:
        out = set()
        for e in edges:
            if len(e) != 2:
                raise ValueError(f"malformed edge {e!r}")
            i, j = int(e[0]), int(e[1])
            out.add((min(i, j), max(i, j)))
        return NetworkGraph(nodes, frozenset(out))
    pts = {i: np.asarray(positions[i], dtype=float) for i in nodes}
    out = set()
    for a, i in enumerate(nodes):
        for j in nodes[a + 1:]:
            dist = np.linalg.norm(pts[i] - pts[j])
            if dist == 0:
                raise ValueError(f"nodes {i} and {j} share a position")
            if dist <= radius:
                out.add((i, j))
    return NetworkGraph(nodes, frozenset(out))


@dataclass
class RoundLog:
    step: int
    node: int
    est_x: float
    est_y: float
    err_pos_m: float
    voi: float
    transmitted: bool
    phi_own: float
    g_val: float
    measured: bool = False
    inner_converged: bool = True


@dataclass
class TransmissionStats:
    transmits: dict[int, int]
    steps: dict[int, int]

    @property
    def rates(self) -> dict[int, float]:
        return {i: (self.transmits[i] / self.steps[i] if self.steps[i] else 0.0) for i in self.transmits}

    @property
    def network_rate(self) -> float:
        r = self.rates
        return float(np.mean(list(r.values()))) if r else 0.0


def account(logs: list[RoundLog], nodes=None) -> TransmissionStats:
    """Per-node transmission counts recomputed from round logs."""
    nodes = sorted({e.node for e in logs}) if nodes is None else list(nodes)
    tx = {i: 0 for i in nodes}
    st = {i: 0 for i in nodes}
    for e in logs:
        st[e.node] += 1
        tx[e.node] += int(e.transmitted)
    return TransmissionStats(tx, st)


@dataclass
class SimConfig:
    rho: float = 1.0
    gamma: float = 0.0
    inner_iters: int = 1
    mission_tol: float = 1e-8
    mission_max_iter: int = 20
    # step size for the mission penalty and dual; defaults to rho
    rho_mission: float | None = None
    # "sum": unit-weight LogOP; "average": convex LogOP weights
    fusion: str = "sum"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.rho_mission is None:
            self.rho_mission = self.rho
        if not self.rho_mission > 0:
            raise ValueError("rho_mission must be positive")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        CensorConfig(self.gamma)
        if self.fusion not in ("sum", "average"):
            raise ValueError(f"unknown fusion rule {self.fusion!r}")


@dataclass
class World:
    model: ProcessModel
    sensors: dict[int, Sensor]
    graph: NetworkGraph
    agents: dict[int, AgentState]
    truth: np.ndarray
    rng: np.random.Generator
    config: SimConfig
    # mission owner -> position requirement [m]
    missions: dict[int, float] = field(default_factory=dict)
    step: int = 0
    stats: TransmissionStats | None = None
    # payload counts, for message-conservation checks
    delivered: int = 0
    sent_to_neighbors: int = 0
    # final primal iterates of the latest round, before fusion
    last_primal: dict[int, np.ndarray] = field(default_factory=dict)
    # optional scripted truth; row k is the target state at step k
    truth_path: np.ndarray | None = None

    def __post_init__(self):
        if self.stats is None:
            ids = sorted(self.agents)
            self.stats = TransmissionStats({i: 0 for i in ids}, {i: 0 for i in ids})


def make_world(model: ProcessModel, sensors: list[Sensor], graph: NetworkGraph, x0_true, prior_mean, prior_cov,
               horizon: int, config: SimConfig, rng: np.random.Generator, missions: dict[int, float] | None = None,
               truth_path: np.ndarray | None = None) -> World:
    """Fresh world with every agent starting from the shared prior.

    With ``truth_path`` the target follows the scripted states instead of
    the process model and no process noise is drawn.
    """
    missions = dict(missions or {})
    for owner in missions:
        if owner not in graph.nodes:
            raise ValueError(f"mission owner {owner} is not a node")
    base = initial_window(prior_mean, prior_cov, horizon)
    phi0 = {o: 0.0 for o in sorted(missions)}
    # caches are shared read-only snapshots; see run_round
    shared = {j: NeighborInfo(base.mean.copy(), base.cov.copy(), dict(phi0)) for j in graph.nodes}
    agents = {}
    for s in sorted(sensors, key=lambda s: s.id):
        nbrs = graph.neighbors(s.id)
        cache = {j: shared[j] for j in nbrs}
        agents[s.id] = AgentState(
            id=s.id, window=base.copy(), lam=np.zeros(base.dim), neighbors=nbrs,
            phi=dict(phi0), neighbor_cache=cache, phi_ref=dict(phi0),
        )
    return World(
        model=model, sensors={s.id: s for s in sensors}, graph=graph, agents=agents,
        truth=np.asarray(x0_true, dtype=float), rng=rng, config=config, missions=missions,
        truth_path=None if truth_path is None else np.asarray(truth_path, dtype=float),
    )


def mission_for(agent: AgentState, requirement_m: float) -> MissionSpec:
    """Owner's requirement: newest position within ``requirement_m`` of the neighborhood fusion.

    ``M`` picks the newest window position and ``m`` is the
    information-weighted position average of the cached neighbor windows,
    both divided by ``requirement_m`` so that ``g`` is dimensionless and the
    level is ``c = 1``. With no neighbors the target collapses onto the
    agent's own predicted position.
    """
    if not requirement_m > 0:
        raise ValueError("mission requirement must be positive")
    n, dim = agent.n, agent.window.dim
    off = dim - n
    idx = [off + POS_IDX[0], off + POS_IDX[1]]
    M = np.zeros((2, dim))
    M[0, idx[0]] = 1.0
    M[1, idx[1]] = 1.0
    infos, vecs = [], []
    for j in agent.neighbors:
        nb = agent.neighbor_cache.get(j)
        if nb is None:
            continue
        Ij = np.linalg.inv(nb.cov[np.ix_(idx, idx)])
        infos.append(Ij)
        vecs.append(Ij @ nb.mean[idx])
    if infos:
        m = np.linalg.solve(sum(infos), sum(vecs))
    else:
        m = agent.window.mean[idx].copy()
    return MissionSpec(owner=agent.id, c=1.0, M=M / requirement_m, m=m / requirement_m)


def _phi_vector(phi: dict[int, float], owners) -> list[float] | None:
    if not owners:
        return None
    return [phi[o] for o in owners]


def run_round(world: World) -> list[RoundLog]:
    """Advance the world by one sampling instant; returns one log per agent."""
    cfg = world.config
    model = world.model
    ids = sorted(world.agents)
    owners = sorted(world.missions)

    if world.truth_path is None:
        world.truth = propagate_truth(model, world.truth, world.rng)
    else:
        if world.step + 1 >= len(world.truth_path):
            raise ValueError("scripted trajectory is shorter than the simulation")
        world.truth = world.truth_path[world.step + 1].copy()

    systems, measured = {}, {}
    for i in ids:
        ag = world.agents[i]
        raw = measure(world.sensors[i], world.truth, world.rng)
        meas = None
        if raw is not None:
            try:
                meas = linearize(world.sensors[i], ag.window.tail, raw)
            except LinearizationError:
                meas = None
        measured[i] = meas is not None
        systems[i] = build_stacked(model, meas, ag.window)

    # no-new-information reference, from the round-start state
    baselines = {
        i: baseline_propagate(world.agents[i], model, cfg.rho, _phi_vector(world.agents[i].phi_ref, owners),
                              sys=systems[i])
        for i in ids
    }

    x_iter = {i: world.agents[i].window.mean.copy() for i in ids}
    nbr_iter = {i: {j: world.agents[i].neighbor_cache[j].mean for j in world.agents[i].neighbors} for i in ids}
    missions = {}
    inner_ok = {i: True for i in ids}
    lam_new = {}
    for it in range(cfg.inner_iters):
        new_x = {}
        for i in ids:
            ag = world.agents[i]
            nb = [nbr_iter[i][j] for j in ag.neighbors]
            lam = dual_update(lam_new.get(i, ag.lam), cfg.rho, x_iter[i], nb)
            lam_new[i] = lam
            probe = AgentState(i, RollingWindow(x_iter[i], ag.window.cov, ag.n), lam, ag.neighbors, ag.phi)
            if i in world.missions:
                spec = mission_for(ag, world.missions[i])
                missions[i] = spec
                sol = primal_update_mission(probe, systems[i], cfg.rho, spec, nb, phi=ag.phi[i],
                                            tol=cfg.mission_tol, max_iter=cfg.mission_max_iter,
                                            rho_mission=cfg.rho_mission)
                new_x[i] = sol.x
                inner_ok[i] = sol.converged
            else:
                new_x[i] = primal_update(probe, systems[i], cfg.rho, nb)
        x_iter = new_x
        if it < cfg.inner_iters - 1:
            # uncensored exchange of iterates inside a sampling instant
            nbr_iter = {i: {j: x_iter[j] for j in world.agents[i].neighbors} for i in ids}

    world.last_primal = {i: x_iter[i].copy() for i in ids}
    logs, outbox = {}, {}
    for i in ids:
        ag = world.agents[i]
        g_val = 0.0
        if i in missions:
            g_val = missions[i].g(x_iter[i])
            ag.phi[i] = mission_dual_update(ag.phi[i], cfg.rho_mission, g_val, missions[i].c)
        P = covariance_update(systems[i])
        ag.lam = lam_new[i]
        actual = aggregate(x_iter[i], P, ag.lam, _phi_vector(ag.phi, owners))
        send, voi = voi_decision(actual, baselines[i], CensorConfig(cfg.gamma))
        if send:
            outbox[i] = NeighborInfo(x_iter[i].copy(), P.copy(), dict(ag.phi))
        world.stats.steps[i] += 1
        world.stats.transmits[i] += int(send)
        logs[i] = dict(voi=voi, transmitted=send, g_val=g_val, own=(x_iter[i], P))

    # delivery barrier: everything below sees only this round's outbox
    for i in ids:
        ag = world.agents[i]
        senders = [j for j in ag.neighbors if j in outbox]
        received = [outbox[j] for j in senders]
        world.delivered += len(received)
        for j in senders:
            ag.neighbor_cache[j] = outbox[j]
        own_mean, own_cov = logs[i]["own"]
        mean, cov = logop_merge(own_mean, own_cov, [(p.mean, p.cov) for p in received],
                                normalize=cfg.fusion == "average")
        ag.phi_ref = dict(ag.phi)
        ag.phi = phi_consensus(i, ag.phi, [p.phi for p in received])
        ag.window = RollingWindow(mean, cov, ag.n)
    for i in outbox:
        world.sent_to_neighbors += world.graph.degree(i)

    # every cached snapshot is rolled once, however many agents hold it
    rolled = {}
    for i in ids:
        for nb in world.agents[i].neighbor_cache.values():
            if id(nb) not in rolled:
                w = advance_window(RollingWindow(nb.mean, nb.cov, model.n), model)
                rolled[id(nb)] = NeighborInfo(w.mean, w.cov, nb.phi)

    out = []
    for i in ids:
        ag = world.agents[i]
        est = ag.window.tail
        err = float(np.hypot(est[POS_IDX[0]] - world.truth[POS_IDX[0]], est[POS_IDX[1]] - world.truth[POS_IDX[1]]))
        out.append(RoundLog(
            step=world.step, node=i, est_x=float(est[POS_IDX[0]]), est_y=float(est[POS_IDX[1]]),
            err_pos_m=err, voi=float(logs[i]["voi"]), transmitted=bool(logs[i]["transmitted"]),
            phi_own=float(ag.phi.get(i, 0.0)), g_val=float(logs[i]["g_val"]),
            measured=measured[i], inner_converged=inner_ok[i],
        ))
        # roll own window, the cached neighbor windows and the dual
        ag.window = advance_window(ag.window, model)
        ag.neighbor_cache = {j: rolled[id(nb)] for j, nb in ag.neighbor_cache.items()}
        ag.lam = shift_dual(ag.lam, ag.n)
    world.step += 1
    return out


def simulate(world: World, steps: int) -> list[RoundLog]:
    logs = []
    for _ in range(steps):
        logs.extend(run_round(world))
    return logs
