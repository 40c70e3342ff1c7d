"""Scenario configuration, Monte Carlo execution and the three experiments.

Scenarios are read from YAML. Nested mappings are flattened into dotted key
paths (``filter.gamma``), list items are addressed as ``nodes[3].kind``, and
any key outside the schema below is rejected with its path.

=====================  ========  =============================================
key                    default   meaning
=====================  ========  =============================================
model.delta            1.0       sampling interval [s]
model.q_scale          0.05      multiplier on the printed CV process noise
filter.horizon         3         window length H (H + 1 states)
filter.rho             1e-6      consensus penalty / dual step
filter.rho_mission     rho       mission penalty / dual step (dimensionless)
filter.gamma           0.0       censoring threshold
filter.gamma_grid      none      threshold grid for sweeps
filter.inner_iters     1         ADMM iterates per sampling instant
filter.fusion          average   LogOP weights, ``sum`` or ``average``
run.steps              200       sampling instants per run
run.runs               20        Monte Carlo runs (seeds seed, seed+1, ...)
run.seed               0         base seed
run.workers            1         parallel worker processes
network.comm_radius    3000.0    radius rule for links [m]
network.edges          none      explicit undirected edge list (overrides)
nodes                  built-in  list of ``{id, kind, x, y, noise_std,``
                                 ``sensing_range}``
missions               []        list of ``{owner, requirement_m}``
truth.x0               built-in  initial target state ``[x, vx, y, vy]``
truth.mode             model     ``model`` or ``waypoints``
truth.waypoints        none      CSV of ``x,y`` rows (waypoint mode)
truth.speed            30.0      target speed along waypoints [m/s]
prior.mean             truth.x0  prior mean before perturbation
prior.std              built-in  per-coordinate prior standard deviations
prior.perturb          true      draw each run's prior mean from the prior
=====================  ========  =============================================

A mission requirement is stated in metres: the owner asks that its position
estimate stay within ``requirement_m`` of the neighborhood fusion. The
requirement function is expressed in units of ``requirement_m`` so it is
dimensionless with level ``c = 1``. The same number is the threshold on the
owner's running-average true error when verdicts are reported.
"""

from __future__ import annotations

import copy
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .models import Sensor, SensorKind, cv_model
from .netsim import RoundLog, SimConfig, build_graph, make_world, simulate


class ConfigError(ValueError):
    """Invalid scenario configuration; the message starts with the key path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass(frozen=True)
class NodeSpec:
    id: int
    kind: str
    x: float
    y: float
    noise_std: float
    sensing_range: float = 1250.0

    def sensor(self) -> Sensor:
        return Sensor(self.id, SensorKind(self.kind), (self.x, self.y), self.noise_std, self.sensing_range)


@dataclass(frozen=True)
class MissionEntry:
    owner: int
    requirement_m: float


def _default_nodes() -> tuple[NodeSpec, ...]:
    # TOA / DOA alternating on both sides of the nominal route, 500 m off it
    layout = [
        (776, 1947), (1890, 1386), (2110, 2614), (3224, 2053), (3443, 3281),
        (4557, 2719), (4776, 3947), (5890, 3386), (6110, 4614), (7224, 4053),
    ]
    out = []
    for i, (x, y) in enumerate(layout):
        kind = "toa" if i % 2 == 0 else "doa"
        out.append(NodeSpec(i, kind, float(x), float(y), 30.0 if kind == "toa" else 0.05))
    return tuple(out)


@dataclass
class Scenario:
    delta: float = 1.0
    q_scale: float = 0.05
    horizon: int = 3
    rho: float = 1e-6
    rho_mission: float | None = None
    gamma: float = 0.0
    gamma_grid: tuple[float, ...] | None = None
    inner_iters: int = 1
    fusion: str = "average"
    steps: int = 200
    runs: int = 20
    seed: int = 0
    workers: int = 1
    comm_radius: float | None = 3000.0
    edges: tuple[tuple[int, int], ...] | None = None
    nodes: tuple[NodeSpec, ...] = field(default_factory=_default_nodes)
    missions: tuple[MissionEntry, ...] = ()
    x0: tuple[float, ...] = (1000.0, 30.0, 1500.0, 15.0)
    trajectory: str = "model"
    waypoints: tuple[tuple[float, float], ...] | None = None
    speed: float = 30.0
    prior_mean: tuple[float, ...] | None = None
    prior_std: tuple[float, ...] = (100.0, 10.0, 100.0, 10.0)
    perturb_prior: bool = True

    def validate(self) -> "Scenario":
        _check(self.delta > 0, "model.delta", "must be positive")
        _check(self.q_scale >= 0, "model.q_scale", "must be non-negative")
        _check(self.horizon >= 1, "filter.horizon", "must be at least 1")
        _check(self.rho > 0, "filter.rho", "must be positive")
        _check(self.rho_mission is None or self.rho_mission > 0, "filter.rho_mission", "must be positive")
        _check(self.gamma >= 0, "filter.gamma", "must be >= 0")
        if self.gamma_grid is not None:
            g = list(self.gamma_grid)
            _check(len(g) > 0, "filter.gamma_grid", "must be nonempty")
            _check(all(v >= 0 for v in g), "filter.gamma_grid", "values must be >= 0")
            _check(g == sorted(g), "filter.gamma_grid", "must be sorted ascending")
        _check(self.inner_iters >= 1, "filter.inner_iters", "must be >= 1")
        _check(self.fusion in ("sum", "average"), "filter.fusion", "must be 'sum' or 'average'")
        _check(self.steps >= 0, "run.steps", "must be >= 0")
        _check(self.runs >= 1, "run.runs", "must be >= 1")
        _check(self.seed >= 0, "run.seed", "must be >= 0")
        _check(self.workers >= 1, "run.workers", "must be >= 1")
        _check(len(self.nodes) > 0, "nodes", "at least one node is required")
        ids = [nd.id for nd in self.nodes]
        _check(len(set(ids)) == len(ids), "nodes", "duplicate node ids")
        for k, nd in enumerate(self.nodes):
            _check(nd.kind in ("toa", "doa", "linear"), f"nodes[{k}].kind", "must be toa, doa or linear")
            _check(nd.noise_std > 0, f"nodes[{k}].noise_std", "must be positive")
            _check(nd.sensing_range > 0, f"nodes[{k}].sensing_range", "must be positive")
        if self.edges is None:
            _check(self.comm_radius is not None and self.comm_radius > 0, "network.comm_radius",
                   "must be positive when no edge list is given")
            pts = [(nd.x, nd.y) for nd in self.nodes]
            _check(len(set(pts)) == len(pts), "nodes", "positions must be distinct in radius mode")
        else:
            for k, e in enumerate(self.edges):
                _check(len(e) == 2 and e[0] in ids and e[1] in ids and e[0] != e[1],
                       f"network.edges[{k}]", "must be a pair of distinct known node ids")
        owners = set()
        for k, m in enumerate(self.missions):
            _check(m.owner in ids, f"missions[{k}].owner", f"unknown node {m.owner}")
            _check(m.owner not in owners, f"missions[{k}].owner", "one mission per owner")
            _check(m.requirement_m > 0, f"missions[{k}].requirement_m", "must be positive")
            owners.add(m.owner)
        _check(len(self.x0) == 4, "truth.x0", "must have 4 entries")
        _check(self.trajectory in ("model", "waypoints"), "truth.mode", "must be 'model' or 'waypoints'")
        if self.trajectory == "waypoints":
            _check(self.waypoints is not None and len(self.waypoints) >= 2, "truth.waypoints",
                   "waypoint mode needs at least two waypoints")
            _check(self.speed > 0, "truth.speed", "must be positive")
        _check(self.prior_mean is None or len(self.prior_mean) == 4, "prior.mean", "must have 4 entries")
        _check(len(self.prior_std) == 4 and all(s > 0 for s in self.prior_std), "prior.std",
               "must have 4 positive entries")
        return self

    @property
    def mission_levels(self) -> dict[int, float]:
        return {m.owner: m.requirement_m for m in self.missions}

    def sim_config(self, gamma: float | None = None) -> SimConfig:
        return SimConfig(rho=self.rho, gamma=self.gamma if gamma is None else gamma, inner_iters=self.inner_iters,
                         fusion=self.fusion, rho_mission=self.rho_mission)


def _check(ok: bool, path: str, msg: str):
    if not ok:
        raise ConfigError(path, msg)


# -- config loading ------------------------------------------------------

def _flatten(obj, prefix=""):
    """Flatten nested mappings into ``{dotted.path: value}``; lists are kept."""
    out = {}
    for k, v in obj.items():
        if not isinstance(k, str):
            raise ConfigError(prefix + str(k), "keys must be strings")
        path = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, path + "."))
        else:
            out[path] = v
    return out


def _num(path, v, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(path, f"expected an integer, got {v!r}")
        return int(v)
    v = float(v)
    if math.isnan(v):
        raise ConfigError(path, "NaN is not allowed")
    return v


def _vec(path, v, size=None):
    if not isinstance(v, (list, tuple)):
        raise ConfigError(path, f"expected a list, got {v!r}")
    out = tuple(_num(f"{path}[{k}]", x) for k, x in enumerate(v))
    if size is not None and len(out) != size:
        raise ConfigError(path, f"expected {size} entries, got {len(out)}")
    return out


def _bool(path, v):
    if not isinstance(v, bool):
        raise ConfigError(path, f"expected true/false, got {v!r}")
    return v


def _str(path, v):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    return v


def _records(path, v, fields, required):
    if not isinstance(v, list):
        raise ConfigError(path, "expected a list of mappings")
    out = []
    for k, item in enumerate(v):
        p = f"{path}[{k}]"
        if not isinstance(item, dict):
            raise ConfigError(p, "expected a mapping")
        for key in item:
            if key not in fields:
                raise ConfigError(f"{p}.{key}", "unknown key")
        for key in required:
            if key not in item:
                raise ConfigError(f"{p}.{key}", "missing required key")
        out.append({key: fields[key](f"{p}.{key}", val) for key, val in item.items()})
    return out


_NODE_FIELDS = {
    "id": lambda p, v: _num(p, v, int),
    "kind": _str,
    "x": _num,
    "y": _num,
    "noise_std": _num,
    "sensing_range": _num,
}
_MISSION_FIELDS = {"owner": lambda p, v: _num(p, v, int), "requirement_m": _num}


def _edges(path, v):
    if not isinstance(v, list):
        raise ConfigError(path, "expected a list of [i, j] pairs")
    out = []
    for k, e in enumerate(v):
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise ConfigError(f"{path}[{k}]", f"malformed edge {e!r}")
        out.append((_num(f"{path}[{k}]", e[0], int), _num(f"{path}[{k}]", e[1], int)))
    return tuple(out)


def _opt(conv):
    return lambda p, v: None if v is None else conv(p, v)


# dotted key -> (Scenario field, converter)
SCHEMA = {
    "model.delta": ("delta", _num),
    "model.q_scale": ("q_scale", _num),
    "filter.horizon": ("horizon", lambda p, v: _num(p, v, int)),
    "filter.rho": ("rho", _num),
    "filter.rho_mission": ("rho_mission", _opt(_num)),
    "filter.gamma": ("gamma", _num),
    "filter.gamma_grid": ("gamma_grid", _opt(_vec)),
    "filter.inner_iters": ("inner_iters", lambda p, v: _num(p, v, int)),
    "filter.fusion": ("fusion", _str),
    "run.steps": ("steps", lambda p, v: _num(p, v, int)),
    "run.runs": ("runs", lambda p, v: _num(p, v, int)),
    "run.seed": ("seed", lambda p, v: _num(p, v, int)),
    "run.workers": ("workers", lambda p, v: _num(p, v, int)),
    "network.comm_radius": ("comm_radius", _opt(_num)),
    "network.edges": ("edges", _opt(_edges)),
    "nodes": ("nodes", lambda p, v: tuple(
        NodeSpec(**r) for r in _records(p, v, _NODE_FIELDS, ("id", "kind", "x", "y", "noise_std")))),
    "missions": ("missions", lambda p, v: tuple(
        MissionEntry(**r) for r in _records(p, v, _MISSION_FIELDS, ("owner", "requirement_m")))),
    "truth.x0": ("x0", lambda p, v: _vec(p, v, 4)),
    "truth.mode": ("trajectory", _str),
    "truth.waypoints": ("waypoints", _str),
    "truth.speed": ("speed", _num),
    "prior.mean": ("prior_mean", _opt(lambda p, v: _vec(p, v, 4))),
    "prior.std": ("prior_std", lambda p, v: _vec(p, v, 4)),
    "prior.perturb": ("perturb_prior", _bool),
}


def load_waypoints(path: str | Path) -> tuple[tuple[float, float], ...]:
    """Read ``x,y`` rows (an optional header line is skipped)."""
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or not "".join(row).strip():
                continue
            try:
                x, y = (float(v) for v in row)
            except ValueError:
                if k == 0:
                    continue
                raise ConfigError("truth.waypoints", f"line {k + 1}: expected two numbers, got {row!r}")
            rows.append((x, y))
    return tuple(rows)


def scenario_from_dict(data: dict, base_dir: str | Path = ".") -> Scenario:
    """Build and validate a scenario from a (possibly nested) mapping."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping at the top level")
    kwargs = {}
    for path, value in _flatten(data).items():
        if path not in SCHEMA:
            raise ConfigError(path, "unknown key")
        name, conv = SCHEMA[path]
        kwargs[name] = conv(path, value)
    if "waypoints" in kwargs:
        wp = Path(kwargs["waypoints"])
        if not wp.is_absolute():
            wp = Path(base_dir) / wp
        try:
            kwargs["waypoints"] = load_waypoints(wp)
        except OSError as exc:
            raise ConfigError("truth.waypoints", f"cannot read {wp}: {exc.strerror}") from exc
    return Scenario(**kwargs).validate()


def load_scenario(path: str | Path) -> Scenario:
    """Load a YAML scenario file. Raises ``ConfigError`` or ``OSError``."""
    path = Path(path)
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from exc
    return scenario_from_dict(data, base_dir=path.parent)


# -- single runs ---------------------------------------------------------

def waypoint_truth(waypoints, speed: float, delta: float, steps: int) -> np.ndarray:
    """Constant-speed traversal of a polyline, sampled every ``delta``.

    Returns ``(steps + 1, 4)`` states ``[x, vx, y, vy]``. The target stops at
    the last waypoint if the path is shorter than the run.
    """
    pts = np.asarray(waypoints, dtype=float)
    seg = np.diff(pts, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(lengths == 0):
        raise ValueError("consecutive waypoints must differ")
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    out = np.zeros((steps + 1, 4))
    for k in range(steps + 1):
        s = min(k * delta * speed, cum[-1])
        j = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        u = seg[j] / lengths[j]
        p = pts[j] + (s - cum[j]) * u
        v = u * speed if s < cum[-1] else np.zeros(2)
        out[k] = [p[0], v[0], p[1], v[1]]
    return out


def _run_one(args) -> list[RoundLog]:
    s, run, gamma = args
    rng = np.random.default_rng(s.seed + run)
    model = cv_model(s.delta, s.q_scale)
    sensors = [nd.sensor() for nd in s.nodes]
    positions = {nd.id: (nd.x, nd.y) for nd in s.nodes}
    if s.edges is not None:
        graph = build_graph(positions, edges=s.edges)
    else:
        graph = build_graph(positions, radius=s.comm_radius)
    P0 = np.diag(np.square(s.prior_std))
    base = np.asarray(s.prior_mean if s.prior_mean is not None else s.x0, dtype=float)
    path = None
    if s.trajectory == "waypoints":
        path = waypoint_truth(s.waypoints, s.speed, s.delta, s.steps)
        x0 = path[0]
        if s.prior_mean is None:
            base = x0.copy()
    else:
        x0 = np.asarray(s.x0, dtype=float)
    prior = rng.multivariate_normal(base, P0) if s.perturb_prior else base
    world = make_world(model, sensors, graph, x0, prior, P0, s.horizon, s.sim_config(gamma), rng,
                       missions=s.mission_levels, truth_path=path)
    return simulate(world, s.steps)


def run_traces(s: Scenario, gamma: float | None = None) -> list[list[RoundLog]]:
    """Round logs of every Monte Carlo run, in run order."""
    s.validate()
    jobs = [(s, r, gamma) for r in range(s.runs)]
    if s.workers > 1 and s.runs > 1:
        with ProcessPoolExecutor(max_workers=s.workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


# -- metrics -------------------------------------------------------------

@dataclass
class Metrics:
    """Run-averaged summary of one scenario.

    Attributes
    ----------
    node_rmse : dict
        Position RMSE per node [m], averaged over runs.
    node_mean_err : dict
        Mean instantaneous position error per node [m].
    running_avg : dict
        Per node, the run-averaged cumulative mean error series [m].
    tx_rates : dict
        Per-node transmission rate, averaged over runs.
    network_rate : float
        Mean of the per-node rates.
    mission_satisfied : dict
        Per mission owner, fraction of runs whose final running-average
        error is within the requirement.
    """

    node_rmse: dict[int, float]
    node_mean_err: dict[int, float]
    running_avg: dict[int, np.ndarray]
    tx_rates: dict[int, float]
    network_rate: float
    mission_satisfied: dict[int, float] = field(default_factory=dict)

    @property
    def mean_err(self) -> float:
        return float(np.mean(list(self.node_mean_err.values())))


def _run_arrays(logs: list[RoundLog]):
    """Per-node ``(errors, transmitted)`` arrays in step order."""
    by_node: dict[int, list[RoundLog]] = {}
    for e in logs:
        by_node.setdefault(e.node, []).append(e)
    out = {}
    for i, rows in sorted(by_node.items()):
        rows.sort(key=lambda e: e.step)
        out[i] = (np.array([e.err_pos_m for e in rows]), np.array([e.transmitted for e in rows], dtype=float))
    return out


def running_average(err: np.ndarray) -> np.ndarray:
    """Cumulative mean of an error series."""
    err = np.asarray(err, dtype=float)
    return np.cumsum(err) / np.arange(1, err.size + 1)


def per_run_rates(logs: list[RoundLog]) -> dict[int, float]:
    return {i: float(tx.mean()) for i, (_, tx) in _run_arrays(logs).items()}


def compute_metrics(traces: list[list[RoundLog]], requirements: dict[int, float] | None = None) -> Metrics:
    """Aggregate per-run round logs by averaging over runs.

    ``requirements`` maps owners to their requirement in metres.
    """
    if not traces or not any(traces):
        raise ValueError("no round logs to summarize (zero steps or zero runs)")
    per_run = [_run_arrays(t) for t in traces]
    nodes = sorted(per_run[0])
    rmse = {i: float(np.mean([np.sqrt(np.mean(r[i][0] ** 2)) for r in per_run])) for i in nodes}
    mean_err = {i: float(np.mean([r[i][0].mean() for r in per_run])) for i in nodes}
    running = {i: np.mean([running_average(r[i][0]) for r in per_run], axis=0) for i in nodes}
    rates = {i: float(np.mean([r[i][1].mean() for r in per_run])) for i in nodes}
    sat = {}
    for owner, req in sorted((requirements or {}).items()):
        sat[owner] = float(np.mean([running_average(r[owner][0])[-1] <= req for r in per_run]))
    return Metrics(rmse, mean_err, running, rates, float(np.mean(list(rates.values()))), sat)


def run_scenario(s: Scenario, gamma: float | None = None) -> tuple[Metrics, list[list[RoundLog]]]:
    """Execute all Monte Carlo runs; returns metrics and the raw traces."""
    traces = run_traces(s, gamma)
    reqs = {m.owner: m.requirement_m for m in s.missions}
    return compute_metrics(traces, reqs), traces


# -- experiments ---------------------------------------------------------

@dataclass
class SweepRow:
    gamma: float
    mean_err_m: float
    min_node_err_m: float
    max_node_err_m: float
    mean_tx_rate: float
    # transmission rate of each run, for per-seed monotonicity checks
    run_rates: tuple[float, ...] = ()


def sweep_gamma(s: Scenario, grid=None) -> list[SweepRow]:
    """Operating-region table, one row per threshold, identical seed sets."""
    grid = list(s.gamma_grid if grid is None else grid)
    if not grid:
        raise ValueError("gamma grid must be nonempty")
    if grid != sorted(grid):
        raise ValueError("gamma grid must be sorted ascending")
    return [sweep_row(g, run_traces(s, g)) for g in grid]


def sweep_row(gamma: float, traces: list[list[RoundLog]]) -> SweepRow:
    """Summarize the traces of one threshold."""
    m = compute_metrics(traces)
    run_rates = tuple(float(np.mean(list(per_run_rates(t).values()))) for t in traces)
    errs = list(m.node_mean_err.values())
    return SweepRow(float(gamma), m.mean_err, float(min(errs)), float(max(errs)), m.network_rate, run_rates)


@dataclass
class MissionComparison:
    owner: int
    requirement_m: float
    aware: Metrics
    agnostic: Metrics
    aware_traces: list[list[RoundLog]]
    agnostic_traces: list[list[RoundLog]]

    def final_running(self, which: str) -> np.ndarray:
        """Owner's final running-average error of each run."""
        traces = self.aware_traces if which == "aware" else self.agnostic_traces
        return np.array([running_average(_run_arrays(t)[self.owner][0])[-1] for t in traces])

    def verdicts(self) -> list[tuple[bool, bool]]:
        """Per run: (agnostic violates, aware satisfies)."""
        a = self.final_running("agnostic")
        b = self.final_running("aware")
        return [(bool(x > self.requirement_m), bool(y <= self.requirement_m)) for x, y in zip(a, b)]


def mission_experiment(s: Scenario, owner: int, requirement_m: float) -> MissionComparison:
    """Run the same seeds with and without a mission on ``owner``."""
    if owner not in {nd.id for nd in s.nodes}:
        raise ValueError(f"mission owner {owner} is not a node")
    aware_s = replace(s, missions=(MissionEntry(owner, requirement_m),)).validate()
    agnostic_s = replace(s, missions=()).validate()
    aware, aware_tr = run_scenario(aware_s)
    agnostic, agnostic_tr = run_scenario(agnostic_s)
    agnostic.mission_satisfied = compute_metrics(agnostic_tr, {owner: requirement_m}).mission_satisfied
    return MissionComparison(owner, requirement_m, aware, agnostic, aware_tr, agnostic_tr)


@dataclass
class FlowRow:
    placement_label: str
    node: int
    tx_rate: float
    network_rate: float


def flow_analysis(s: Scenario, placements: dict[str, MissionEntry]) -> tuple[list[FlowRow], dict[str, list[float]]]:
    """Per-node transmission rates under each mission placement.

    Returns the table and, per placement, the network rate of every run.
    """
    ids = {nd.id for nd in s.nodes}
    for label, m in placements.items():
        if m.owner not in ids:
            raise ValueError(f"placement {label!r}: owner {m.owner} is not a node")
    rows, per_run = [], {}
    for label, m in placements.items():
        metrics, traces = run_scenario(replace(s, missions=(m,)).validate())
        per_run[label] = [float(np.mean(list(per_run_rates(t).values()))) for t in traces]
        for i, r in sorted(metrics.tx_rates.items()):
            rows.append(FlowRow(label, i, r, metrics.network_rate))
    return rows, per_run


# -- CSV output ----------------------------------------------------------

def fmt(v) -> str:
    """Locale-free, deterministic number formatting."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


TRACE_HEADER = ("run", "step", "node", "est_x", "est_y", "err_pos_m", "voi", "transmitted", "phi_own", "g_val")
SWEEP_HEADER = ("gamma", "mean_err_m", "min_node_err_m", "max_node_err_m", "mean_tx_rate")
FLOW_HEADER = ("placement_label", "node", "tx_rate", "network_rate")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def trace_csv(traces: list[list[RoundLog]]) -> str:
    rows = []
    for run, logs in enumerate(traces):
        for e in sorted(logs, key=lambda e: (e.step, e.node)):
            rows.append((run, e.step, e.node, e.est_x, e.est_y, e.err_pos_m, e.voi, e.transmitted, e.phi_own, e.g_val))
    return _csv_text(TRACE_HEADER, rows)


def sweep_csv(rows: list[SweepRow]) -> str:
    return _csv_text(SWEEP_HEADER, [(r.gamma, r.mean_err_m, r.min_node_err_m, r.max_node_err_m, r.mean_tx_rate)
                                    for r in rows])


def flow_csv(rows: list[FlowRow]) -> str:
    return _csv_text(FLOW_HEADER, [(r.placement_label, r.node, r.tx_rate, r.network_rate) for r in rows])


def read_trace(text: str) -> list[list[RoundLog]]:
    """Parse a trace CSV back into per-run round logs (for audits)."""
    runs: dict[int, list[RoundLog]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        runs.setdefault(int(row["run"]), []).append(RoundLog(
            step=int(row["step"]), node=int(row["node"]), est_x=float(row["est_x"]), est_y=float(row["est_y"]),
            err_pos_m=float(row["err_pos_m"]), voi=float(row["voi"]), transmitted=row["transmitted"] == "1",
            phi_own=float(row["phi_own"]), g_val=float(row["g_val"]),
        ))
    return [runs[k] for k in sorted(runs)]


def default_scenario(**overrides) -> Scenario:
    return replace(Scenario(), **overrides).validate()


def with_overrides(s: Scenario, **kw) -> Scenario:
    """Copy of ``s`` with the non-``None`` keyword overrides applied."""
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(copy.copy(s), **kw).validate()
