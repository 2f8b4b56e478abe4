"""Flat, backend-neutral description of one simulation instance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine, qlearn, routing, traffic
from .router import Timing


@dataclass
class SimSetup:
    topo: object
    algorithm: routing.RoutingAlgorithm
    hp: qlearn.QHyperParams
    timing: Timing
    vc_buffer: int
    compiled: traffic.CompiledTraffic
    # [(start_ns, interval_ns or inf)]
    segments: list
    phases: np.ndarray
    traffic_state: int
    explore_state: int
    val_state: int
    qtables: np.ndarray | None
    window_ns: int = 10_000
    record_from: int = 0
    record_to: int = 2**62
    gen_stop: int = 2**62
    audit: bool = False
    trace: bool = False
    deadlock_ns: int = 200_000
    extra: dict = field(default_factory=dict)


def initial_qtables(topo, algorithm, timing):
    if algorithm.tag == routing.QADAPTIVE:
        return np.stack([qlearn.q_init(topo, r, timing).values for r in range(topo.m)])
    if algorithm.tag == routing.QROUTING:
        return np.stack([qlearn.q_init_legacy(topo, r, timing).values for r in range(topo.m)])
    return None


def make_setup(topo, algorithm, pattern, schedule, seed, *, hp=None, timing=None,
               vc_buffer=20, packet_bytes=128, bandwidth=4.0, **kw) -> SimSetup:
    """Draw the setup-time randomness (pattern tables, node phases) and freeze it."""
    hp = hp or qlearn.QHyperParams()
    timing = timing or Timing(serialization_ns=serialization_ns(packet_bytes, bandwidth))
    rng_t = engine.RngStream(seed, engine.TRAFFIC)
    compiled = traffic.compile_pattern(pattern, topo, rng_t)
    phases = np.array([rng_t.random() for _ in range(topo.nodes)], dtype=float)
    segments = [(t, traffic.generation_interval(v, packet_bytes, bandwidth))
                for t, v in schedule.segments]
    return SimSetup(
        topo=topo, algorithm=algorithm, hp=hp, timing=timing, vc_buffer=vc_buffer,
        compiled=compiled, segments=segments, phases=phases,
        traffic_state=rng_t.state,
        explore_state=engine.RngStream(seed, engine.EXPLORE).state,
        val_state=engine.RngStream(seed, engine.VAL).state,
        qtables=initial_qtables(topo, algorithm, timing), **kw)


def serialization_ns(packet_bytes, bandwidth_bytes_per_ns):
    ser = packet_bytes / bandwidth_bytes_per_ns
    if ser != math.floor(ser) or ser <= 0:
        raise ValueError(f"packet serialization {ser} ns is not a positive integer")
    return int(ser)
