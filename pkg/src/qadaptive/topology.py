"""All-to-all Dragonfly topology: identities, port classes and wiring.

Identity encoding is fixed: ``router = group * a + index`` and
``node = router * p + index``.  Ports of every router are laid out as::

    [0, p)              host ports
    [p, p + a - 1)      local ports, ordered by peer router index (self skipped)
    [p + a - 1, k)      global ports

Global wiring is circulant: in group ``G`` the router with local index ``i``
exposes global-link ordinal ``l = i * h + q`` on its ``q``-th global port,
which lands in group ``(G + l + 1) % g`` at ordinal ``a * h - 1 - l``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HOST, LOCAL, GLOBAL = 0, 1, 2
KIND_NAMES = {HOST: "host", LOCAL: "local", GLOBAL: "global"}

_INT32_MAX = 2**31 - 1


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class DragonflyParams:
    p: int
    a: int
    h: int

    def __post_init__(self):
        for name in ("p", "a", "h"):
            if not isinstance(getattr(self, name), (int, np.integer)):
                raise TopologyError(f"{name} must be an integer")
        if self.p < 1 or self.a < 2 or self.h < 1:
            raise TopologyError(f"need p >= 1, a >= 2, h >= 1; got {self}")
        # packet/queue indices in the compiled core are int32
        if self.nodes * max(self.k, 8) > _INT32_MAX:
            raise TopologyError(f"{self} overflows 32-bit identifiers")

    @property
    def k(self) -> int:
        return self.p + self.a - 1 + self.h

    @property
    def g(self) -> int:
        return self.a * self.h + 1

    @property
    def m(self) -> int:
        return self.g * self.a

    @property
    def nodes(self) -> int:
        return self.m * self.p

    N = nodes

    @property
    def balanced(self) -> bool:
        return self.a == 2 * self.p == 2 * self.h


@dataclass(frozen=True)
class Topology:
    params: DragonflyParams
    # (m, k) arrays; host ports hold the attached node id in peer_router and -1 in peer_port
    peer_router: np.ndarray = field(repr=False)
    peer_port: np.ndarray = field(repr=False)
    port_kind: np.ndarray = field(repr=False)

    # convenience passthroughs
    @property
    def p(self):
        return self.params.p

    @property
    def a(self):
        return self.params.a

    @property
    def h(self):
        return self.params.h

    @property
    def k(self):
        return self.params.k

    @property
    def g(self):
        return self.params.g

    @property
    def m(self):
        return self.params.m

    @property
    def nodes(self):
        return self.params.nodes

    @property
    def first_local(self):
        return self.params.p

    @property
    def first_global(self):
        return self.params.p + self.params.a - 1

    def group_of(self, r: int) -> int:
        return r // self.params.a

    def index_of(self, r: int) -> int:
        return r % self.params.a

    def router_of(self, n: int) -> int:
        return n // self.params.p

    def kind(self, port: int) -> int:
        return int(self.port_kind[port])

    def local_port(self, r: int, peer_index: int) -> int:
        """Local port of ``r`` leading to the router with local index ``peer_index``."""
        i = r % self.params.a
        if peer_index == i:
            raise TopologyError(f"router {r} has no local port to itself")
        return self.params.p + (peer_index if peer_index < i else peer_index - 1)

    def neighbor(self, r: int, port: int) -> tuple[int, int]:
        """(peer router, peer port) across a local or global port."""
        if port < self.params.p:
            raise TopologyError("host ports lead to nodes, not routers")
        return int(self.peer_router[r, port]), int(self.peer_port[r, port])

    def gateway_to_group(self, r: int, gdst: int) -> tuple[int, int]:
        """Router in ``r``'s group holding the global link to ``gdst``, and that port."""
        P = self.params
        G = r // P.a
        if not 0 <= gdst < P.g:
            raise TopologyError(f"group {gdst} out of range")
        if gdst == G:
            raise TopologyError(f"router {r} is already in group {gdst}")
        ordinal = (gdst - G) % P.g - 1
        return G * P.a + ordinal // P.h, self.first_global + ordinal % P.h

    def minimal_path(self, src: int, dst: int) -> list[int]:
        """Output ports along the unique shortest router path from ``src`` to ``dst``."""
        self._check_router(src)
        self._check_router(dst)
        path = []
        cur = src
        while cur != dst:
            port = self.min_port(cur, dst)
            path.append(port)
            cur = int(self.peer_router[cur, port])
        return path

    def min_port(self, r: int, dst: int) -> int:
        """First port of the minimal path from ``r`` toward router ``dst`` (r != dst)."""
        a = self.params.a
        G, Gd = r // a, dst // a
        if G == Gd:
            return self.local_port(r, dst % a)
        return self.min_port_to_group(r, Gd)

    def min_port_to_group(self, r: int, gdst: int) -> int:
        gw, port = self.gateway_to_group(r, gdst)
        if gw == r:
            return port
        return self.local_port(r, gw % self.params.a)

    def _check_router(self, r):
        if not 0 <= r < self.params.m:
            raise TopologyError(f"router id {r} out of range")

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["router", "port", "kind", "peer_router", "peer_port"])
            for r in range(self.params.m):
                for port in range(self.params.k):
                    w.writerow([r, port, KIND_NAMES[int(self.port_kind[port])],
                                int(self.peer_router[r, port]), int(self.peer_port[r, port])])
        return path


def build_topology(params: DragonflyParams) -> Topology:
    p, a, h, k, g, m = params.p, params.a, params.h, params.k, params.g, params.m
    peer_router = np.full((m, k), -1, dtype=np.int32)
    peer_port = np.full((m, k), -1, dtype=np.int32)
    kind = np.empty(k, dtype=np.int8)
    kind[:p] = HOST
    kind[p:p + a - 1] = LOCAL
    kind[p + a - 1:] = GLOBAL

    first_global = p + a - 1
    for r in range(m):
        G, i = divmod(r, a)
        for n in range(p):
            peer_router[r, n] = r * p + n
        for j in range(a):
            if j == i:
                continue
            peer = G * a + j
            peer_router[r, p + (j if j < i else j - 1)] = peer
            peer_port[r, p + (j if j < i else j - 1)] = p + (i if i < j else i - 1)
        for q in range(h):
            ordinal = i * h + q
            G2 = (G + ordinal + 1) % g
            far = a * h - 1 - ordinal
            peer_router[r, first_global + q] = G2 * a + far // h
            peer_port[r, first_global + q] = first_global + far % h

    peer_router.setflags(write=False)
    peer_port.setflags(write=False)
    kind.setflags(write=False)
    return Topology(params, peer_router, peer_port, kind)
