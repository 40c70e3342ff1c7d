"""Mission-aware, VoI-censored, ADMM-distributed rolling-window MAP filter."""

from .agent import AgentState, MissionSpec, NeighborInfo, logop_merge, primal_update, primal_update_mission
from .censoring import CensorConfig, GaussianBelief, gaussian_kl, voi_decision
from .harness import Scenario, load_scenario, run_scenario
from .models import ProcessModel, Sensor, SensorKind, cv_model, linearize, measure, propagate_truth
from .netsim import SimConfig, World, build_graph, make_world, simulate
from .window import RollingWindow, StackedSystem, build_stacked

__all__ = [
    "AgentState", "MissionSpec", "NeighborInfo", "logop_merge", "primal_update", "primal_update_mission",
    "CensorConfig", "GaussianBelief", "gaussian_kl", "voi_decision",
    "Scenario", "load_scenario", "run_scenario",
    "ProcessModel", "Sensor", "SensorKind", "cv_model", "linearize", "measure", "propagate_truth",
    "SimConfig", "World", "build_graph", "make_world", "simulate",
    "RollingWindow", "StackedSystem", "build_stacked",
]
