"""Baseline Dragonfly routing: MIN, VALg, VALn, UGALg, UGALn and PAR.

Every policy returns the output port for a packet sitting at router ``r``
and may record a waypoint in the packet (``way_kind``/``way``).  Waypoints
are followed minimally and cleared on arrival.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

from .router import WAY_GROUP, WAY_NONE, WAY_ROUTER

MIN, VALG, VALN, UGALG, UGALN, PAR, QROUTING, QADAPTIVE = range(8)

TAGS = {
    "min": MIN, "valg": VALG, "valn": VALN, "ugalg": UGALG,
    "ugaln": UGALN, "par": PAR, "qrouting": QROUTING, "qadaptive": QADAPTIVE,
}
NAMES = {v: k for k, v in TAGS.items()}

_HOP_CAP = {MIN: 3, VALG: 5, VALN: 6, UGALG: 5, UGALN: 6, PAR: 7, QADAPTIVE: 5}


@dataclass(frozen=True)
class RoutingAlgorithm:
    tag: int
    maxq: int = 0
    bias: int = 0

    @classmethod
    def from_name(cls, name, maxq=0, bias=0):
        try:
            return cls(TAGS[name.lower()], maxq, bias)
        except KeyError:
            raise ValueError(f"unknown routing {name!r}; choose from {sorted(TAGS)}") from None

    @property
    def name(self):
        return NAMES[self.tag]

    @property
    def hop_cap(self):
        if self.tag == QROUTING:
            return self.maxq + 3
        return _HOP_CAP[self.tag]

    @property
    def vc_count(self):
        # one VC per hop: a packet's i-th router-to-router hop travels on VC i-1
        return self.hop_cap


def route_min(topo, r, pkt):
    if r == pkt.dst_router:
        return pkt.dst_node % topo.p
    return topo.min_port(r, pkt.dst_router)


def _follow_waypoint(topo, r, pkt):
    if pkt.way_kind == WAY_GROUP and r // topo.a == pkt.way:
        pkt.way_kind = WAY_NONE
    elif pkt.way_kind == WAY_ROUTER and r == pkt.way:
        pkt.way_kind = WAY_NONE
    if pkt.way_kind == WAY_GROUP:
        return topo.min_port_to_group(r, pkt.way)
    if pkt.way_kind == WAY_ROUTER:
        return topo.min_port(r, pkt.way)
    return route_min(topo, r, pkt)


def _excluded(src_g, dst_g):
    return (src_g,) if src_g == dst_g else tuple(sorted((src_g, dst_g)))


def _skip_excluded(x, excluded):
    for e in excluded:
        if x >= e:
            x += 1
    return x


def draw_intermediate_group(topo, src_g, dst_g, rng):
    """Uniform group outside {src_g, dst_g}, or -1 if none exists."""
    excl = _excluded(src_g, dst_g)
    count = topo.g - len(excl)
    if count <= 0:
        return -1
    return _skip_excluded(rng.randbelow(count), excl)


def draw_intermediate_router(topo, src_g, dst_g, rng):
    """Uniform router whose group is outside {src_g, dst_g}, or -1 if none exists."""
    excl = _excluded(src_g, dst_g)
    count = topo.g - len(excl)
    if count <= 0:
        return -1
    x = rng.randbelow(count * topo.a)
    return _skip_excluded(x // topo.a, excl) * topo.a + x % topo.a


def _degenerate():
    warnings.warn("no intermediate group available (g too small); routing minimally",
                  RuntimeWarning, stacklevel=3)


def route_valg(topo, r, pkt, rng):
    if pkt.hops == 0 and r != pkt.dst_router:
        gi = draw_intermediate_group(topo, pkt.src_group, pkt.dst_group, rng)
        if gi < 0:
            _degenerate()
        else:
            pkt.way_kind, pkt.way = WAY_GROUP, gi
    return _follow_waypoint(topo, r, pkt)


def route_valn(topo, r, pkt, rng):
    if pkt.hops == 0 and r != pkt.dst_router:
        ri = draw_intermediate_router(topo, pkt.src_group, pkt.dst_group, rng)
        if ri < 0:
            _degenerate()
        else:
            pkt.way_kind, pkt.way = WAY_ROUTER, ri
    return _follow_waypoint(topo, r, pkt)


def ugal_prefers_minimal(q_min, q_nm, bias=0):
    return q_min < 2 * q_nm + bias


def ugal_decide(topo, r, pkt, rng, by_router, estimate, bias):
    """One UGAL evaluation at router ``r``: returns True if minimal was kept.

    Two non-minimal candidates are drawn (groups for the global variant,
    routers for the node variant); the one whose first port is least
    congested is compared against the minimal first port.
    """
    draw = draw_intermediate_router if by_router else draw_intermediate_group
    c1 = draw(topo, pkt.src_group, pkt.dst_group, rng)
    if c1 < 0:
        return True
    c2 = draw(topo, pkt.src_group, pkt.dst_group, rng)
    first = topo.min_port if by_router else topo.min_port_to_group
    q1 = estimate(r, first(r, c1))
    q2 = estimate(r, first(r, c2))
    best, q_nm = (c1, q1) if q1 <= q2 else (c2, q2)
    q_min = estimate(r, topo.min_port(r, pkt.dst_router))
    if ugal_prefers_minimal(q_min, q_nm, bias):
        return True
    pkt.way_kind = WAY_ROUTER if by_router else WAY_GROUP
    pkt.way = best
    return False


def route_ugal(topo, r, pkt, rng, by_router, estimate, bias=0):
    if pkt.hops == 0 and r != pkt.dst_router:
        ugal_decide(topo, r, pkt, rng, by_router, estimate, bias)
    return _follow_waypoint(topo, r, pkt)


def route_par(topo, r, pkt, rng, estimate, bias=0):
    if r != pkt.dst_router and pkt.way_kind == WAY_NONE:
        if pkt.hops == 0:
            pkt.par_min = ugal_decide(topo, r, pkt, rng, True, estimate, bias)
        elif pkt.par_min and r // topo.a == pkt.src_group:
            pkt.par_min = ugal_decide(topo, r, pkt, rng, True, estimate, bias)
        else:
            pkt.par_min = False
    return _follow_waypoint(topo, r, pkt)
