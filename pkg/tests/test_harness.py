import dataclasses
import re

import numpy as np
import pytest
import yaml

from voifilter import harness
from voifilter.harness import (
    ConfigError,
    MissionEntry,
    NodeSpec,
    Scenario,
    compute_metrics,
    flow_analysis,
    load_scenario,
    mission_experiment,
    read_trace,
    run_scenario,
    run_traces,
    running_average,
    scenario_from_dict,
    sweep_csv,
    sweep_gamma,
    trace_csv,
    waypoint_truth,
)
from voifilter.models import cv_model, linearize, measure, propagate_truth
from voifilter.oracle import rwt_filter

SMALL_NODES = (
    NodeSpec(0, "toa", 0.0, 0.0, 30.0, 2500.0),
    NodeSpec(1, "doa", 800.0, 300.0, 0.05, 2500.0),
    NodeSpec(2, "toa", 1600.0, 0.0, 30.0, 2500.0),
)


def small(**kw):
    base = dict(nodes=SMALL_NODES, comm_radius=None, edges=((0, 1), (1, 2)), steps=25, runs=2,
                x0=(500.0, 10.0, 200.0, 5.0), q_scale=0.5)
    base.update(kw)
    return Scenario(**base).validate()


# -- config ---------------------------------------------------------------

def test_defaults_table_matches_dataclass():
    doc = harness.__doc__
    s = Scenario()
    for key, (name, _) in harness.SCHEMA.items():
        row = re.search(rf"^{re.escape(key)}\s+(\S+)", doc, re.M)
        assert row, f"{key} missing from the schema table"
        shown = row.group(1)
        val = getattr(s, name)
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            assert float(shown) == float(val), key


def test_nested_and_dotted_keys_agree():
    a = scenario_from_dict({"filter": {"gamma": 0.5}, "run": {"steps": 7}})
    assert a.gamma == 0.5 and a.steps == 7


@pytest.mark.parametrize("data, path", [
    ({"filter": {"gamma": -1.0}}, "filter.gamma"),
    ({"filter": {"gama": 1.0}}, "filter.gama"),
    ({"run": {"steps": 2.5}}, "run.steps"),
    ({"run": {"steps": True}}, "run.steps"),
    ({"nodes": [{"id": 0, "kind": "toa", "x": 0, "y": 0}]}, "nodes[0].noise_std"),
    ({"nodes": [{"id": 0, "kind": "toa", "x": 0, "y": 0, "noise_std": 1, "colour": 2}]}, "nodes[0].colour"),
    ({"nodes": [{"id": 0, "kind": "sonar", "x": 0, "y": 0, "noise_std": 1}]}, "nodes[0].kind"),
    ({"missions": [{"owner": 99, "requirement_m": 10}]}, "missions[0].owner"),
    ({"network": {"edges": [[0, 1, 2]]}}, "network.edges[0]"),
    ({"truth": {"x0": [1, 2, 3]}}, "truth.x0"),
    ({"truth": {"mode": "waypoints"}}, "truth.waypoints"),
    ({"filter": {"gamma_grid": [1, 0.5]}}, "filter.gamma_grid"),
    ({"filter": {"fusion": "max"}}, "filter.fusion"),
])
def test_config_errors_carry_field_path(data, path):
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(data)
    assert exc.value.path == path


def test_duplicate_node_ids_rejected():
    nodes = [{"id": 0, "kind": "toa", "x": 0, "y": 0, "noise_std": 1}] * 2
    with pytest.raises(ConfigError):
        scenario_from_dict({"nodes": nodes, "network": {"comm_radius": None, "edges": []}})


def test_load_scenario_with_waypoints(tmp_path):
    (tmp_path / "wp.csv").write_text("x,y\n0,0\n100,0\n100,100\n")
    cfg = {"truth": {"mode": "waypoints", "waypoints": "wp.csv", "speed": 10.0}, "run": {"steps": 5}}
    (tmp_path / "s.yaml").write_text(yaml.safe_dump(cfg))
    s = load_scenario(tmp_path / "s.yaml")
    assert s.waypoints == ((0.0, 0.0), (100.0, 0.0), (100.0, 100.0))


def test_bad_waypoint_file(tmp_path):
    (tmp_path / "wp.csv").write_text("0,0\n1,oops\n")
    with pytest.raises(ConfigError):
        harness.load_waypoints(tmp_path / "wp.csv")
    cfg = {"truth": {"mode": "waypoints", "waypoints": "missing.csv"}}
    with pytest.raises(ConfigError):
        scenario_from_dict(cfg, base_dir=tmp_path)


def test_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("filter: [unclosed\n")
    with pytest.raises(ConfigError):
        load_scenario(p)


@pytest.mark.parametrize("name", ["default.yaml", "mission.yaml", "flow.yaml"])
def test_shipped_configs_load(name):
    from pathlib import Path
    s = load_scenario(Path(__file__).parent.parent / "configs" / name)
    assert s.nodes


def test_shipped_default_matches_builtin():
    from pathlib import Path
    s = load_scenario(Path(__file__).parent.parent / "configs" / "default.yaml")
    assert dataclasses.replace(s, gamma_grid=None) == Scenario()


# -- trajectories ---------------------------------------------------------

def test_waypoint_truth():
    path = waypoint_truth([(0, 0), (100, 0), (100, 50)], speed=20.0, delta=1.0, steps=10)
    assert path.shape == (11, 4)
    assert np.allclose(path[0], [0, 20, 0, 0])
    assert np.allclose(path[5], [100, 0, 0, 20])
    assert np.allclose(path[7], [100, 0, 40, 20])
    # parked at the last waypoint
    assert np.allclose(path[10], [100, 0, 50, 0])
    with pytest.raises(ValueError):
        waypoint_truth([(0, 0), (0, 0)], 1.0, 1.0, 3)


def test_running_average():
    assert np.allclose(running_average([2.0, 4.0, 6.0]), [2, 3, 4])


# -- runs and metrics -----------------------------------------------------

def test_zero_steps_errors_on_metrics():
    s = small(steps=0)
    traces = run_traces(s)
    assert traces == [[], []]
    with pytest.raises(ValueError):
        compute_metrics(traces)


def test_single_node_matches_local_filter():
    node = NodeSpec(0, "toa", 200.0, -100.0, 10.0, 5000.0)
    s = small(nodes=(node,), edges=(), steps=20, runs=1, perturb_prior=False, seed=3)
    metrics, traces = run_scenario(s)
    model = cv_model(s.delta, s.q_scale)
    sensor = node.sensor()
    rng = np.random.default_rng(3)
    truth = [np.array(s.x0)]
    errs = []

    def meas_fn(k, x_lin):
        truth.append(propagate_truth(model, truth[-1], rng))
        m = linearize(sensor, x_lin, measure(sensor, truth[-1], rng))
        return m.pseudo_obs, m.H, m.R

    P0 = np.diag(np.square(s.prior_std))
    for w, x in zip(rwt_filter(np.array(s.x0), P0, model, s.horizon, s.steps, meas_fn), truth[1:]):
        errs.append(np.hypot(w.tail[0] - x[0], w.tail[2] - x[2]))
    # errors are small differences of km-scale positions, so compare in metres
    assert np.allclose([e.err_pos_m for e in traces[0]], errs, rtol=0, atol=1e-6)
    assert metrics.node_mean_err[0] == pytest.approx(np.mean(errs), abs=1e-6)


def test_metrics_recomputable_from_csv():
    s = small(gamma=0.05)
    metrics, traces = run_scenario(s)
    again = compute_metrics(read_trace(trace_csv(traces)))
    for i in metrics.node_mean_err:
        assert again.node_mean_err[i] == pytest.approx(metrics.node_mean_err[i], rel=1e-9)
        assert again.tx_rates[i] == metrics.tx_rates[i]
    assert again.network_rate == metrics.network_rate


def test_csv_bytes_deterministic_and_parallel_safe():
    s = small(gamma=0.05, runs=3)
    a = trace_csv(run_traces(s))
    b = trace_csv(run_traces(s))
    c = trace_csv(run_traces(dataclasses.replace(s, workers=2)))
    assert a == b == c
    assert a.splitlines()[0] == ",".join(harness.TRACE_HEADER)
    assert a.endswith("\n")


def test_metric_spread_shrinks_with_runs():
    s = small(steps=15)
    spread = []
    for runs in (5, 50):
        vals = []
        for block in range(4):
            m, _ = run_scenario(dataclasses.replace(s, runs=runs, seed=1000 * block))
            vals.append(m.mean_err)
        spread.append(np.var(vals))
    assert spread[1] < spread[0]


def test_sweep_rows():
    s = small(steps=15)
    rows = sweep_gamma(s, [0.0, 0.5, 5.0])
    assert [r.gamma for r in rows] == [0.0, 0.5, 5.0]
    assert rows[0].mean_tx_rate == 1.0
    for r in rows:
        assert r.min_node_err_m <= r.mean_err_m <= r.max_node_err_m
    for a, b in zip(rows, rows[1:]):
        assert all(x >= y for x, y in zip(a.run_rates, b.run_rates))
    text = sweep_csv(rows)
    assert len(text.splitlines()) == 4
    with pytest.raises(ValueError):
        sweep_gamma(s, [1.0, 0.5])
    with pytest.raises(ValueError):
        sweep_gamma(s, [])


def test_mission_experiment_pairs_same_seeds():
    s = small(steps=20, gamma=0.5, rho_mission=10.0)
    cmp = mission_experiment(s, 1, 50.0)
    plain, plain_traces = run_scenario(s)
    # the agnostic arm is the mission-free scenario, bit for bit
    assert trace_csv(cmp.agnostic_traces) == trace_csv(plain_traces)
    assert all(e.g_val == 0 for t in cmp.agnostic_traces for e in t)
    assert any(e.g_val > 0 for t in cmp.aware_traces for e in t if e.node == 1)
    assert all(e.phi_own >= 0 for t in cmp.aware_traces for e in t)
    assert len(cmp.verdicts()) == s.runs
    with pytest.raises(ValueError):
        mission_experiment(s, 7, 10.0)


def test_flow_isolated_node_rate_from_local_voi():
    nodes = SMALL_NODES + (NodeSpec(3, "toa", 5000.0, 5000.0, 30.0, 1.0),)
    s = small(nodes=nodes, gamma=0.5, steps=20)
    rows, per_run = flow_analysis(s, {"a": MissionEntry(0, 50.0), "b": MissionEntry(2, 50.0)})
    assert len(rows) == 8 and set(per_run) == {"a", "b"}
    iso = [r.tx_rate for r in rows if r.node == 3]
    # never senses, never hears anyone: nothing new to share
    assert iso == [0.0, 0.0]
    text = harness.flow_csv(rows)
    assert text.splitlines()[0] == "placement_label,node,tx_rate,network_rate"
    with pytest.raises(ValueError):
        flow_analysis(s, {"x": MissionEntry(9, 1.0)})


def test_fmt():
    assert harness.fmt(True) == "1"
    assert harness.fmt(np.int64(3)) == "3"
    assert harness.fmt(0.1) == "0.1"
    assert harness.fmt(1e-20) == "1e-20"


def test_with_overrides_skips_none():
    s = small()
    t = harness.with_overrides(s, seed=None, runs=7)
    assert t.runs == 7 and t.seed == s.seed
