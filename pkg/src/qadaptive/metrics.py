"""Latency, throughput, hop-count and convergence statistics.

All inputs are plain arrays from a core's ``results()``; nothing here touches
simulator state, so reports can be rebuilt from saved records.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

SUMMARY_COLUMNS = ("pattern", "load", "routing", "seed", "mean_ns", "p50_ns", "p95_ns",
                   "p99_ns", "q1_ns", "q3_ns", "mean_hops", "throughput", "converge_ns",
                   "inflight_count")
TIMESERIES_COLUMNS = ("t0_ns", "mean_ns", "throughput", "mean_hops")
PROVENANCE_COLUMNS = ("config_hash", "status")


@dataclass(frozen=True)
class DeliveryRecord:
    gen_ns: int
    deliver_ns: int
    hops: int
    src_node: int
    dst_node: int

    @property
    def latency(self):
        return self.deliver_ns - self.gen_ns


def percentile(samples, q):
    """Nearest-rank percentile: the ``ceil(q*n)``-th smallest sample (1-based).

    Returns ``None`` for an empty sample set.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile {q} outside [0, 1]")
    xs = np.sort(np.asarray(samples))
    n = len(xs)
    if n == 0:
        return None
    rank = max(1, math.ceil(q * n))
    return xs[rank - 1].item()


def throughput(delivered, window_ns, nodes, serialization_ns=32):
    """Delivered bytes over the window, normalized by aggregate injection bandwidth.

    With fixed-size packets this is ``delivered * ser / (window * N)``; one
    packet per node every ``ser`` ns gives 1.0.
    """
    if window_ns <= 0:
        raise ValueError("window length must be positive")
    return delivered * serialization_ns / (window_ns * nodes)


@dataclass(frozen=True)
class WindowStats:
    t0: int
    t1: int
    count: int
    mean_ns: float | None
    p50_ns: int | None
    p95_ns: int | None
    p99_ns: int | None
    q1_ns: int | None
    q3_ns: int | None
    mean_hops: float | None
    throughput: float

    @property
    def iqr(self):
        return None if self.count == 0 else self.q3_ns - self.q1_ns

    @property
    def whiskers(self):
        """(Q1 - 1.5 IQR, Q3 + 1.5 IQR)."""
        if self.count == 0:
            return None
        return self.q1_ns - 1.5 * self.iqr, self.q3_ns + 1.5 * self.iqr


def window_stats(gen, deliver, hops, t0, t1, nodes, serialization_ns=32):
    """Statistics of the packets delivered in ``[t0, t1)``."""
    gen = np.asarray(gen)
    deliver = np.asarray(deliver)
    hops = np.asarray(hops)
    sel = (deliver >= t0) & (deliver < t1)
    lat = deliver[sel] - gen[sel]
    n = int(sel.sum())
    tp = throughput(n, t1 - t0, nodes, serialization_ns)
    if n == 0:
        return WindowStats(t0, t1, 0, None, None, None, None, None, None, None, tp)
    return WindowStats(
        t0, t1, n, float(lat.mean()),
        percentile(lat, 0.5), percentile(lat, 0.95), percentile(lat, 0.99),
        percentile(lat, 0.25), percentile(lat, 0.75),
        float(hops[sel].mean()), tp)


@dataclass(frozen=True)
class SeriesPoint:
    t0: int
    count: int
    mean_ns: float | None
    throughput: float
    mean_hops: float | None


def time_series(results, window_ns, nodes, serialization_ns=32, t_end=None):
    """Per-window aggregates from a core's window counters; only complete windows."""
    count, lat, hops = results["win_count"], results["win_lat"], results["win_hops"]
    full = len(count) if t_end is None else min(len(count), t_end // window_ns)
    out = []
    for i in range(full):
        c = int(count[i])
        out.append(SeriesPoint(
            i * window_ns, c,
            lat[i] / c if c else None,
            throughput(c, window_ns, nodes, serialization_ns),
            hops[i] / c if c else None))
    return out


def convergence_time(series, window_ns=10_000, tolerance=0.1, hold=5, tail=5):
    """Start of the earliest window from which ``hold`` consecutive windows stay
    within ``tolerance`` of the median of the last ``tail`` windows.

    ``series`` holds per-window mean latencies (``None`` for empty windows).
    Returns ``None`` if the series is too short or never settles.
    """
    vals = [None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)
            for v in series]
    if len(vals) < hold + tail:
        return None
    end = [v for v in vals[-tail:] if v is not None]
    if len(end) < tail:
        return None
    ref = float(np.median(end))
    lo, hi = ref * (1 - tolerance), ref * (1 + tolerance)
    ok = [v is not None and lo <= v <= hi for v in vals]
    run = 0
    for i, good in enumerate(ok):
        run = run + 1 if good else 0
        if run == hold:
            return (i - hold + 1) * window_ns
    return None


def analytic_mean_min_hops(topo):
    """Mean router-to-router hop count of minimal routes under uniform random traffic.

    Node pairs (s != d) are weighted equally, so a router pair carries ``p*p``
    pairs except the diagonal, which carries ``p*(p-1)`` pairs of zero hops.
    """
    m, p, a = topo.m, topo.p, topo.a
    total = 0
    for r in range(m):
        G = r // a
        for d in range(m):
            if r == d:
                continue
            if d // a == G:
                h = 1
            else:
                gw, port = topo.gateway_to_group(r, d // a)
                far = int(topo.peer_router[gw, port])
                h = 1 + (gw != r) + (far != d)
            total += h * p * p
    return total / (topo.nodes * (topo.nodes - 1))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def write_csv(path, columns, rows):
    """Write dict rows with a fixed column order; ``None`` becomes an empty field."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
