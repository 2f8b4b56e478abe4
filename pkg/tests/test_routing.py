import math
from collections import Counter
from types import SimpleNamespace

import pytest

from conftest import simulator
from qadaptive.engine import RngStream
from qadaptive.router import WAY_GROUP, WAY_NONE, WAY_ROUTER, Packet
from qadaptive.routing import (RoutingAlgorithm, draw_intermediate_group,
                               draw_intermediate_router, route_par, route_valg,
                               route_valn, ugal_decide, ugal_prefers_minimal)


class CountingRng:
    """Deterministic stand-in that records how many draws were made."""

    def __init__(self, values=(0,)):
        self.values = list(values)
        self.calls = 0

    def randbelow(self, n):
        v = self.values[self.calls % len(self.values)] % n
        self.calls += 1
        return v

    def random(self):
        self.calls += 1
        return 0.5


def _pkt(topo, src_node, dst_node):
    return Packet(0, src_node, dst_node, 0, topo.p, topo.a)


@pytest.mark.parametrize("q_min,q_nm,bias,minimal", [
    (3, 2, 0, True),
    (8, 3, 0, False),
    (0, 0, 0, False),
    (0, 0, 1, True),
])
def test_ugal_rule(q_min, q_nm, bias, minimal):
    assert ugal_prefers_minimal(q_min, q_nm, bias) is minimal


@pytest.mark.parametrize("name,cap", [
    ("min", 3), ("valg", 5), ("valn", 6), ("ugalg", 5), ("ugaln", 6), ("par", 7), ("qadaptive", 5),
])
def test_hop_caps(name, cap):
    alg = RoutingAlgorithm.from_name(name)
    assert alg.hop_cap == cap == alg.vc_count


def test_qrouting_hop_cap_follows_threshold():
    assert RoutingAlgorithm.from_name("qrouting", maxq=4).hop_cap == 7
    with pytest.raises(ValueError):
        RoutingAlgorithm.from_name("ecmp")


def _within_three_sigma(counts, n, bins):
    p = 1 / bins
    sigma = math.sqrt(n * p * (1 - p))
    return all(abs(counts.get(b, 0) - n * p) <= 3 * sigma for b in range(bins))


def test_intermediate_group_excludes_endpoints_and_is_uniform(desk):
    rng = RngStream(5, "val-intermediate")
    n = 100_000
    draws = Counter(draw_intermediate_group(desk, 2, 6, rng) for _ in range(n))
    assert 2 not in draws and 6 not in draws
    others = [g for g in range(desk.g) if g not in (2, 6)]
    ranked = Counter({i: draws[g] for i, g in enumerate(others)})
    assert _within_three_sigma(ranked, n, len(others))


def test_intermediate_group_for_same_group_pair_excludes_only_that_group(desk):
    rng = RngStream(5, "val-intermediate")
    seen = {draw_intermediate_group(desk, 4, 4, rng) for _ in range(2_000)}
    assert seen == set(range(desk.g)) - {4}


def test_intermediate_router_never_lies_in_source_or_destination_group(desk):
    rng = RngStream(9, "val-intermediate")
    n = 100_000
    draws = Counter(draw_intermediate_router(desk, 0, 8, rng) for _ in range(n))
    assert all(r // desk.a not in (0, 8) for r in draws)
    assert len(draws) == (desk.g - 2) * desk.a
    assert _within_three_sigma(Counter({i: c for i, (_, c) in enumerate(sorted(draws.items()))}),
                               n, len(draws))


def test_valg_and_valn_record_waypoints_at_the_source(desk):
    pkt = _pkt(desk, 0, 71)
    route_valg(desk, 0, pkt, CountingRng([0]))
    assert pkt.way_kind == WAY_GROUP and pkt.way == 1
    pkt = _pkt(desk, 0, 71)
    route_valn(desk, 0, pkt, CountingRng([5]))
    assert pkt.way_kind == WAY_ROUTER and pkt.way // desk.a not in (0, 8)


def test_degenerate_two_group_network_routes_minimally_with_warning():
    topo = SimpleNamespace(g=2, a=2, p=1, min_port=lambda r, d: 42,
                           min_port_to_group=lambda r, g: 42)
    pkt = Packet(0, 0, 3, 0, 1, 2)
    with pytest.warns(RuntimeWarning):
        assert route_valg(topo, 0, pkt, CountingRng()) == 42
    with pytest.warns(RuntimeWarning):
        assert route_valn(topo, 0, Packet(0, 0, 3, 0, 1, 2), CountingRng()) == 42
    assert draw_intermediate_router(topo, 0, 1, CountingRng()) == -1
    assert pkt.way_kind == WAY_NONE


def test_ugal_picks_least_congested_candidate(desk):
    est = {}

    def estimate(r, port):
        return est.get(port, 0)

    pkt = _pkt(desk, 0, 71)
    min_port = desk.min_port(0, 35)
    est[min_port] = 10
    assert not ugal_decide(desk, 0, pkt, CountingRng([0, 3]), False, estimate, 0)
    assert pkt.way_kind == WAY_GROUP and pkt.way not in (0, 8)
    pkt = _pkt(desk, 0, 71)
    est.clear()
    est[min_port] = 1
    for port in range(desk.p, desk.k):
        if port != min_port:
            est[port] = 5
    assert ugal_decide(desk, 0, pkt, CountingRng([0, 3]), False, estimate, 0)
    assert pkt.way_kind == WAY_NONE


def test_par_reevaluates_only_inside_the_source_group(desk):
    zero = lambda r, port: 0  # noqa: E731
    pkt = _pkt(desk, 0, 71)
    pkt.hops = 1
    pkt.par_min = True
    rng = CountingRng()
    route_par(desk, 1, pkt, rng, zero, bias=1)
    assert rng.calls == 2  # two candidate draws at a source-group router
    pkt = _pkt(desk, 0, 71)
    pkt.hops = 2
    pkt.par_min = True
    rng = CountingRng()
    route_par(desk, 5 * desk.a, pkt, rng, zero, bias=1)
    assert rng.calls == 0 and not pkt.par_min


def test_par_switch_away_from_source_router_costs_one_local_hop(desk):
    # minimal at the source, then diverted at a source-group router
    zero = lambda r, port: 0  # noqa: E731
    pkt = _pkt(desk, 0, 71)
    pkt.hops = 1
    pkt.par_min = True
    route_par(desk, 1, pkt, CountingRng([7]), zero, bias=0)
    assert pkt.way_kind == WAY_ROUTER and not pkt.par_min


@pytest.mark.parametrize("routing", ["par", "ugalg", "ugaln"])
def test_bias_one_on_empty_network_takes_the_minimal_path(desk, routing):
    sim = simulator(desk, routing, bias=1, trace=True)
    sim.inject(0, 71)
    sim.run_until(10_000)
    (row,) = sim.results()["trace"]
    routers = [int(x) for x in row[6].split("-")]
    expect = [0]
    for port in desk.minimal_path(0, 35):
        expect.append(int(desk.peer_router[expect[-1], port]))
    assert routers == expect and row[4] - row[3] == 580


def test_zero_bias_on_empty_network_goes_non_minimal(desk):
    sim = simulator(desk, "ugaln", bias=0, trace=True)
    sim.inject(0, 71)
    sim.run_until(10_000)
    (row,) = sim.results()["trace"]
    assert row[5] > 3


@pytest.mark.parametrize("routing,pattern,cap", [
    ("valg", "adv:1", 5), ("valn", "adv:1", 6), ("par", "adv:4", 7),
])
def test_saturated_runs_reach_but_never_exceed_the_hop_cap(desk, routing, pattern, cap):
    sim = simulator(desk, routing, pattern, 1.0)
    sim.run_until(100_000)
    res = sim.results()
    assert res["max_hops"] == cap and res["hop_violations"] == 0


def test_min_routes_within_three_hops_for_all_pairs(desk):
    for s in range(desk.m):
        for d in range(desk.m):
            assert len(desk.minimal_path(s, d)) <= 3


def valn_adversarial_ceiling(topo):
    """Upper bound on VALn throughput under ADV+1 from global-link load.

    A channel Y->Z (Z != Y+1) carries 2/(g-2) of a group's injection, the
    channels Y->Y+1 carry nothing, and each channel has one node's bandwidth.
    """
    return (topo.g - 2) / (2 * topo.a * topo.p)


def test_valn_adversarial_ceiling_tends_to_one_half(desk, topo1056):
    assert valn_adversarial_ceiling(desk) == 7 / 16
    assert valn_adversarial_ceiling(topo1056) == 31 / 64


def test_valn_adv1_saturates_near_its_analytic_ceiling(desk):
    from qadaptive.metrics import window_stats
    sim = simulator(desk, "valn", "adv:1", 0.6)
    sim.run_until(200_000)
    res = sim.results()
    st = window_stats(res["rec_gen"], res["rec_deliver"], res["rec_hops"], 100_000, 200_000,
                      desk.nodes)
    ceiling = valn_adversarial_ceiling(desk)
    assert 0.95 * ceiling <= st.throughput <= ceiling + 0.005
