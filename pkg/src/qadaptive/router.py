"""Router-side data: packets, VC buffers, credit counters and output ports.

The simulation cores keep router state in flat arrays for speed; the classes
here are the reference shapes used by the pure-Python core and by tests.
"""
from __future__ import annotations

from collections import deque

from .engine import ContractViolation
from .topology import GLOBAL, HOST

# Packet.way_kind
WAY_NONE, WAY_GROUP, WAY_ROUTER = 0, 1, 2
# Packet.inter_state (Q-adaptive first-intermediate-router flag)
INTER_NONE, INTER_PENDING, INTER_DONE = 0, 1, 2


class Packet:
    __slots__ = (
        "id", "src_node", "dst_node", "src_router", "dst_router", "src_group",
        "dst_group", "src_local", "vc", "hops", "gen_time", "arr_time",
        "way_kind", "way", "par_min", "inter_state", "in_port", "out_port", "path",
    )

    def __init__(self, pid, src_node, dst_node, gen_time, p, a):
        self.id = pid
        self.src_node = src_node
        self.dst_node = dst_node
        self.src_router = src_node // p
        self.dst_router = dst_node // p
        self.src_group = self.src_router // a
        self.dst_group = self.dst_router // a
        self.src_local = src_node % p
        self.vc = 0
        self.hops = 0
        self.gen_time = gen_time
        self.arr_time = gen_time
        self.way_kind = WAY_NONE
        self.way = -1
        self.par_min = False
        self.inter_state = INTER_NONE
        self.in_port = -1
        self.out_port = -1
        self.path = None

    def __repr__(self):
        return (f"Packet(id={self.id}, {self.src_node}->{self.dst_node}, hops={self.hops}, "
                f"vc={self.vc}, way={self.way_kind}:{self.way})")


class VcBuffer:
    """FIFO of packets with a hard capacity; overflow means the credit protocol broke."""

    __slots__ = ("capacity", "queue")

    def __init__(self, capacity=20):
        self.capacity = capacity
        self.queue = deque()

    def __len__(self):
        return len(self.queue)

    def push(self, pkt):
        if len(self.queue) >= self.capacity:
            raise ContractViolation(f"VC buffer overflow ({self.capacity} slots)")
        self.queue.append(pkt)

    def pop(self):
        return self.queue.popleft()


class CreditCounter:
    """Free downstream slots per (output port, VC)."""

    __slots__ = ("capacity", "available")

    def __init__(self, ports, vcs, capacity=20):
        self.capacity = capacity
        self.available = [[capacity] * vcs for _ in range(ports)]

    def used(self, port):
        return sum(self.capacity - c for c in self.available[port])

    def take(self, port, vc):
        if self.available[port][vc] <= 0:
            raise ContractViolation(f"forward on port {port} vc {vc} without credit")
        self.available[port][vc] -= 1

    def give(self, port, vc):
        if self.available[port][vc] >= self.capacity:
            raise ContractViolation(f"credit overflow on port {port} vc {vc}")
        self.available[port][vc] += 1


class OutputPort:
    __slots__ = ("busy_until", "queued", "rr")

    def __init__(self):
        self.busy_until = 0
        self.queued = 0    # packets in this router's input buffers routed to this port
        self.rr = -1       # last granted requester slot


def congestion_estimate(queued_for_port: int, credits: CreditCounter, port: int) -> int:
    """Output-queue occupancy plus credits in use downstream of ``port``."""
    return queued_for_port + credits.used(port)


class Timing:
    """Zero-load timing of one hop; all values in integer nanoseconds."""

    __slots__ = ("serialization_ns", "local_latency_ns", "global_latency_ns",
                 "host_latency_ns", "router_latency_ns")

    def __init__(self, serialization_ns=32, local_latency_ns=30, global_latency_ns=300,
                 host_latency_ns=30, router_latency_ns=0):
        self.serialization_ns = serialization_ns
        self.local_latency_ns = local_latency_ns
        self.global_latency_ns = global_latency_ns
        self.host_latency_ns = host_latency_ns
        self.router_latency_ns = router_latency_ns

    @property
    def local_hop(self):
        return self.serialization_ns + self.local_latency_ns + self.router_latency_ns

    @property
    def global_hop(self):
        return self.serialization_ns + self.global_latency_ns + self.router_latency_ns

    @property
    def host_delivery(self):
        """Router output to destination node: serialization plus host-link latency."""
        return self.serialization_ns + self.host_latency_ns

    def link_latency(self, kind):
        if kind == HOST:
            return self.host_latency_ns
        return self.global_latency_ns if kind == GLOBAL else self.local_latency_ns
