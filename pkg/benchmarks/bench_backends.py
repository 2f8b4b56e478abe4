"""Compare the pure-Python and compiled simulation cores on identical runs.

    python benchmarks/bench_backends.py [--sim-us 20] [--routing qadaptive] [--pattern ur]
"""
import argparse
import time

import numpy as np

from qadaptive.routing import RoutingAlgorithm
from qadaptive.sim import BACKENDS, make_simulator
from qadaptive.simsetup import make_setup
from qadaptive.topology import DragonflyParams, build_topology
from qadaptive.traffic import LoadSchedule, TrafficPattern


def timed_run(backend, args, topo):
    setup = make_setup(topo, RoutingAlgorithm.from_name(args.routing),
                       TrafficPattern.parse(args.pattern), LoadSchedule.constant(args.load),
                       args.seed)
    sim = make_simulator(setup, backend)
    t0 = time.perf_counter()
    sim.run_until(int(args.sim_us * 1000))
    elapsed = time.perf_counter() - t0
    return sim.results(), elapsed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sim-us", type=float, default=20.0, help="simulated microseconds")
    ap.add_argument("--routing", default="qadaptive")
    ap.add_argument("--pattern", default="ur")
    ap.add_argument("--load", type=float, default=0.8)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--shape", default="2,4,2", help="p,a,h")
    args = ap.parse_args()
    topo = build_topology(DragonflyParams(*map(int, args.shape.split(","))))
    rows = {}
    for backend in BACKENDS:
        res, elapsed = timed_run(backend, args, topo)
        rows[backend] = (res, elapsed)
        print(f"{backend:>7}: {res['events']:>10d} events in {elapsed:8.3f} s "
              f"= {res['events'] / elapsed / 1e6:6.3f} M events/s")
    if len(rows) == 2:
        (a, ta), (b, tb) = rows["python"], rows["cython"]
        same = all(np.array_equal(a[k], b[k]) if isinstance(a[k], np.ndarray) else a[k] == b[k]
                   for k in a if k != "backend")
        print(f"speedup {ta / tb:.1f}x; results identical: {same}")
    else:
        print("compiled core not built; only the Python core was timed")


if __name__ == "__main__":
    main()
