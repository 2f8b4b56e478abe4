"""Experiment runner: one configuration, or a sweep over many, to CSV files."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import metrics
from .engine import ContractViolation, DeadlockError
from .router import Timing
from .sim import make_simulator
from .simsetup import make_setup
from .topology import build_topology

NEVER = 2**62


@dataclass
class RunResult:
    config: object
    summary: dict
    timeseries: list
    packets: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)   # router -> [(time, row, port, value)]
    warmup_end: int | None = None
    counters: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.summary["status"] == "ok"


def build_setup(cfg, topo=None):
    topo = topo or build_topology(cfg.params())
    ser = cfg.packet_bytes / cfg.bandwidth_gbps
    timing = Timing(int(ser), cfg.local_latency_ns, cfg.global_latency_ns,
                    cfg.host_latency_ns, cfg.router_latency_ns)
    record_from, record_to = (NEVER, NEVER) if cfg.warmup == "converge" else (
        cfg.warmup_ns, cfg.warmup_ns + cfg.measure_ns)
    return make_setup(
        topo, cfg.algorithm(), cfg.traffic_pattern(), cfg.schedule(), cfg.seed,
        hp=cfg.hyper(), timing=timing, vc_buffer=cfg.vc_buffer,
        packet_bytes=cfg.packet_bytes, bandwidth=cfg.bandwidth_gbps,
        window_ns=cfg.window_ns, record_from=record_from, record_to=record_to,
        audit=cfg.audit, trace=cfg.trace, deadlock_ns=cfg.deadlock_ns)


class _Stepper:
    """Advances a simulator while taking Q-table snapshots at requested times."""

    def __init__(self, sim, cfg):
        self.sim = sim
        self.times = sorted(set(cfg.snapshot_times()))
        self.routers = cfg.snapshot_routers() if sim.qtable(0) is not None else []
        self.snaps = {r: [] for r in self.routers}
        self.clock = 0

    def advance(self, t):
        while self.times and self.times[0] <= t:
            ts = self.times.pop(0)
            if ts > self.clock:
                self.sim.run_until(ts)
                self.clock = ts
            self._snap(ts)
        if t > self.clock:
            self.sim.run_until(t)
            self.clock = t

    def _snap(self, ts):
        base = self.sim.topo.p
        for r in self.routers:
            table = self.sim.qtable(r)
            rows = self.snaps[r]
            for row in range(table.shape[0]):
                for col in range(table.shape[1]):
                    rows.append((ts, row, base + col, float(table[row, col])))


def _series_means(sim, cfg, t_end):
    res = sim.results()
    pts = metrics.time_series(res, cfg.window_ns, sim.topo.nodes, t_end=t_end)
    return [pt.mean_ns for pt in pts]


def run_experiment(cfg, topo=None):
    """Run one configuration; simulation failures are reported in ``status``."""
    cfg.validate()
    topo = topo or build_topology(cfg.params())
    setup = build_setup(cfg, topo)
    sim = make_simulator(setup, cfg.backend)
    stepper = _Stepper(sim, cfg)
    status = "ok"
    warm = cfg.warmup_ns
    end = cfg.run_end
    try:
        if cfg.warmup == "converge":
            warm = None
            t = 0
            while t < cfg.warmup_max_ns:
                t += cfg.window_ns
                stepper.advance(t)
                means = _series_means(sim, cfg, t)
                if metrics.convergence_time(means, cfg.window_ns, cfg.converge_tolerance,
                                            cfg.converge_hold) is not None:
                    warm = t
                    break
            if warm is None:
                warm = t
                status = "not-converged"
            sim.set_record_window(warm, warm + cfg.measure_ns)
            end = max(cfg.t_end_ns, warm + cfg.measure_ns)
        stepper.advance(end)
    except DeadlockError as e:
        status = f"deadlock: {e}"
    except ContractViolation as e:
        status = f"violation: {e}"
    return _collect(cfg, sim, stepper, warm, end, status)


def _collect(cfg, sim, stepper, warm, end, status):
    res = sim.results()
    nodes = sim.topo.nodes
    ser = int(cfg.packet_bytes / cfg.bandwidth_gbps)
    stats = metrics.window_stats(res["rec_gen"], res["rec_deliver"], res["rec_hops"],
                                 warm, warm + cfg.measure_ns, nodes, ser)
    series = metrics.time_series(res, cfg.window_ns, nodes, ser, t_end=min(end, res["clock"]))
    converge = metrics.convergence_time([pt.mean_ns for pt in series], cfg.window_ns,
                                        cfg.converge_tolerance, cfg.converge_hold)
    if status == "ok" and res["hop_violations"]:
        status = f"violation: {res['hop_violations']} packets exceeded the hop cap"
    chash = cfg.config_hash()
    prov = {"pattern": cfg.pattern, "load": cfg.load, "routing": cfg.routing, "seed": cfg.seed,
            "config_hash": chash}
    summary = dict(prov)
    summary.update({
        "mean_ns": stats.mean_ns, "p50_ns": stats.p50_ns, "p95_ns": stats.p95_ns,
        "p99_ns": stats.p99_ns, "q1_ns": stats.q1_ns, "q3_ns": stats.q3_ns,
        "mean_hops": stats.mean_hops, "throughput": stats.throughput,
        "converge_ns": converge, "inflight_count": res["inflight"], "status": status,
    })
    rows = []
    for pt in series:
        row = {"t0_ns": pt.t0, "mean_ns": pt.mean_ns, "throughput": pt.throughput,
               "mean_hops": pt.mean_hops}
        row.update(prov)
        rows.append(row)
    counters = {k: res[k] for k in ("generated", "injected", "delivered", "inflight",
                                    "feedback_sent", "feedback_received", "hop_violations",
                                    "credit_violations", "max_hops", "events", "clock")}
    return RunResult(cfg, summary, rows, res["trace"] or [], stepper.snaps, warm, counters)


def _run_cell(cfg):
    try:
        return run_experiment(cfg)
    except Exception as e:  # a failed cell must not abort the sweep
        summary = {"pattern": cfg.pattern, "load": cfg.load, "routing": cfg.routing,
                   "seed": cfg.seed, "config_hash": cfg.config_hash(),
                   "status": f"error: {type(e).__name__}: {e}"}
        return RunResult(cfg, summary, [])


def sweep(cells, parallel=1):
    """Run every cell; results come back in cell order whatever the completion order."""
    if parallel <= 1 or len(cells) <= 1:
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_run_cell, cells))


SUMMARY_HEADER = metrics.SUMMARY_COLUMNS + metrics.PROVENANCE_COLUMNS
TIMESERIES_HEADER = metrics.TIMESERIES_COLUMNS + ("pattern", "load", "routing", "seed", "config_hash")
PACKET_HEADER = ("packet_id", "src", "dst", "gen_ns", "deliver_ns", "hops", "path")


def _cell_dir(out, result, many):
    if not many:
        return out
    cfg = result.config
    d = os.path.join(out, "cells", f"{cfg.config_hash()}-seed{cfg.seed}")
    os.makedirs(d, exist_ok=True)
    return d


def write_outputs(results, out, topo=None):
    """Single writer for every file of a sweep."""
    os.makedirs(out, exist_ok=True)
    metrics.write_csv(os.path.join(out, "summary.csv"), SUMMARY_HEADER,
                      [r.summary for r in results])
    metrics.write_csv(os.path.join(out, "timeseries.csv"), TIMESERIES_HEADER,
                      [row for r in results for row in r.timeseries])
    if topo is not None:
        topo.to_csv(os.path.join(out, "topology.csv"))
    many = len(results) > 1
    for r in results:
        if r.config.trace:
            rows = [dict(zip(PACKET_HEADER, t)) for t in r.packets]
            metrics.write_csv(os.path.join(_cell_dir(out, r, many), "packets.csv"), PACKET_HEADER, rows)
        for router, snaps in r.snapshots.items():
            rows = [dict(zip(("time_ns", "row", "port", "value"), s)) for s in snaps]
            metrics.write_csv(os.path.join(_cell_dir(out, r, many), f"qtable_router{router}.csv"),
                              ("time_ns", "row", "port", "value"), rows)
