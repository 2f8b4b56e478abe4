"""Q-learning routing: the two-level Q-adaptive scheme and legacy Q-routing.

Q-values are estimated delivery times in nanoseconds, measured from the
packet's arrival at the router holding the table to its delivery at the
destination node.  Tables are indexed by column ``port - p`` (host ports are
never candidates).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .router import INTER_DONE, INTER_PENDING, Timing
from .routing import route_min
from .topology import GLOBAL


@dataclass(frozen=True)
class QHyperParams:
    alpha: float = 0.2
    beta: float = 0.04
    epsilon: float = 0.001
    q_thld1: float = 0.2
    q_thld2: float = 0.35

    def __post_init__(self):
        for name in ("alpha", "beta", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("q_thld1", "q_thld2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


class TwoLevelQTable:
    """``(g*p) x (k-p)`` table; row ``dst_group * p + src_local``."""

    def __init__(self, topo, values=None):
        self.p = topo.p
        shape = (topo.g * topo.p, topo.k - topo.p)
        self.values = np.zeros(shape) if values is None else np.asarray(values, dtype=float)
        if self.values.shape != shape:
            raise ValueError(f"two-level table must be {shape}, got {self.values.shape}")

    def row_index(self, dst_group, src_local):
        return dst_group * self.p + src_local

    @property
    def size(self):
        return self.values.size


class LegacyQTable:
    """``m x (k-p)`` table; row = destination router."""

    def __init__(self, topo, values=None):
        shape = (topo.m, topo.k - topo.p)
        self.values = np.zeros(shape) if values is None else np.asarray(values, dtype=float)
        if self.values.shape != shape:
            raise ValueError(f"legacy table must be {shape}, got {self.values.shape}")

    @property
    def size(self):
        return self.values.size


def _port_hops(topo, timing):
    kinds = topo.port_kind[topo.p:]
    return np.where(kinds == GLOBAL, timing.global_hop, timing.local_hop).astype(float)


def _time_to_group(topo, timing, x, j):
    """Zero-load router-to-router time from ``x`` to the first router of group ``j``."""
    a = topo.a
    if x // a == j:
        return 0
    gw, _ = topo.gateway_to_group(x, j)
    return timing.global_hop + (0 if gw == x else timing.local_hop)


def _time_to_router(topo, timing, x, d):
    a = topo.a
    if x == d:
        return 0
    if x // a == d // a:
        return timing.local_hop
    gw, port = topo.gateway_to_group(x, d // a)
    far = int(topo.peer_router[gw, port])
    return ((0 if gw == x else timing.local_hop) + timing.global_hop
            + (0 if far == d else timing.local_hop))


def group_tail(timing):
    """Zero-load time from entering the destination group to delivery (one local hop)."""
    return timing.local_hop + timing.host_delivery


def q_init(topo, r, timing=None):
    """Initial two-level table of router ``r``: zero-load minimal delivery times."""
    timing = timing or Timing()
    p, g = topo.p, topo.g
    hop = _port_hops(topo, timing)
    nbrs = topo.peer_router[r, p:]
    table = TwoLevelQTable(topo)
    tail = group_tail(timing)
    for j in range(g):
        row = hop + [_time_to_group(topo, timing, int(n), j) for n in nbrs] + tail
        table.values[j * p:(j + 1) * p] = row
    return table


def q_init_legacy(topo, r, timing=None):
    timing = timing or Timing()
    p = topo.p
    hop = _port_hops(topo, timing)
    nbrs = topo.peer_router[r, p:]
    table = LegacyQTable(topo)
    for d in range(topo.m):
        table.values[d] = hop + [_time_to_router(topo, timing, int(n), d) for n in nbrs]
        table.values[d] += timing.host_delivery
    return table


def select_temp_port(q_min, q_best, min_port, best_port, threshold):
    """Keep the minimal port unless the best port is relatively faster by ``threshold``."""
    if q_min <= 0:
        return min_port
    dv = (q_min - q_best) / q_min
    return min_port if dv < threshold else best_port


def hysteretic_update(q, r, q_next, alpha, beta):
    delta = r + q_next - q
    if delta < 0:
        return q + alpha * delta
    return q + beta * delta


def qrouting_update(q, r, q_next, alpha):
    return q + alpha * (r + q_next - q)


def argmin_first(row):
    """Index of the smallest value; lowest index wins ties."""
    best = 0
    bv = row[0]
    for i in range(1, len(row)):
        if row[i] < bv:
            bv = row[i]
            best = i
    return best


def qadaptive_route(topo, r, pkt, table, hp, rng):
    """Output port under Q-adaptive routing; ``table`` is the two-level table of ``r``.

    Only the source router and the first router the packet visits in an
    intermediate group consult the table; every other hop is minimal.
    """
    p = topo.p
    if r // topo.a == pkt.dst_group:
        return route_min(topo, r, pkt)
    row = table[pkt.dst_group * p + pkt.src_local]
    if pkt.hops == 0:
        best = argmin_first(row) + p
        min_port = topo.min_port_to_group(r, pkt.dst_group)
        temp = select_temp_port(row[min_port - p], row[best - p], min_port, best, hp.q_thld1)
        if rng.random() < hp.epsilon:
            return p + rng.randbelow(topo.k - p)
        return temp
    if pkt.inter_state == INTER_PENDING:
        pkt.inter_state = INTER_DONE
        gw, gport = topo.gateway_to_group(r, pkt.dst_group)
        if gw == r:
            return gport
        min_port = topo.local_port(r, gw % topo.a)
        if topo.a > 2:
            best = p + rng.randbelow(topo.a - 2)
            if best >= min_port:
                best += 1
        else:
            best = min_port
        temp = select_temp_port(row[min_port - p], row[best - p], min_port, best, hp.q_thld2)
        if rng.random() < hp.epsilon:
            return p + rng.randbelow(topo.a - 1)
        return temp
    return route_min(topo, r, pkt)


def qadaptive_feedback(topo, r, pkt, out_port, table, timing):
    """Remaining-time estimate ``r`` reports upstream for a packet it just routed."""
    if r == pkt.dst_router:
        return float(timing.host_delivery)
    if r // topo.a == pkt.dst_group:
        # destination-group rows are never consulted, so report the zero-load remainder
        return float(group_tail(timing))
    return table[pkt.dst_group * topo.p + pkt.src_local][out_port - topo.p]


def qrouting_route(topo, r, pkt, table, maxq, epsilon, rng):
    """Legacy Q-routing with a hop threshold; ``table`` is the legacy table of ``r``."""
    if r == pkt.dst_router or pkt.hops >= maxq:
        return route_min(topo, r, pkt)
    p = topo.p
    best = argmin_first(table[pkt.dst_router]) + p
    if rng.random() < epsilon:
        return p + rng.randbelow(topo.k - p)
    return best


def qrouting_feedback(topo, r, pkt, out_port, table, timing):
    if r == pkt.dst_router:
        return float(timing.host_delivery)
    return table[pkt.dst_router][out_port - topo.p]
