"""Flit-level Dragonfly network simulator with Q-adaptive and classic routing."""
from .config import ConfigError, RunConfig, build_matrix
from .harness import RunResult, run_experiment, sweep, write_outputs
from .routing import RoutingAlgorithm
from .sim import BACKENDS, default_backend, make_simulator
from .simsetup import make_setup
from .topology import DragonflyParams, Topology, build_topology
from .traffic import LoadSchedule, TrafficPattern

__all__ = [
    "BACKENDS", "ConfigError", "DragonflyParams", "LoadSchedule", "RoutingAlgorithm",
    "RunConfig", "RunResult", "Topology", "TrafficPattern", "build_matrix", "build_topology",
    "default_backend", "make_setup", "make_simulator", "run_experiment", "sweep",
    "write_outputs",
]
