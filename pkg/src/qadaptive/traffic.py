"""Synthetic workloads: UR, ADV+i, 3D stencil, many-to-many, random neighbors.

Each node injects single-flit packets at a fixed interval set by the
offered load, with a per-node random phase.  Table-driven patterns (stencil,
many-to-many, random neighbors) are compiled into CSR target lists.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

UR, ADV, ROUND_ROBIN, RANDOM_TARGET = 0, 1, 2, 3


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class TrafficPattern:
    kind: str                       # ur | adv | stencil3d | m2m | randneighbors
    offset: int = 0                 # ADV+i
    dims: tuple = ()                # (X, Y, Z)
    lo: int = 6
    hi: int = 20

    @classmethod
    def parse(cls, text: str) -> "TrafficPattern":
        s = text.strip().lower()
        if s == "ur":
            return cls("ur")
        m = re.fullmatch(r"adv[:+](\d+)", s)
        if m:
            return cls("adv", offset=int(m.group(1)))
        m = re.fullmatch(r"(stencil3d|m2m):(\d+)x(\d+)x(\d+)", s)
        if m:
            return cls(m.group(1), dims=tuple(int(x) for x in m.group(2, 3, 4)))
        m = re.fullmatch(r"randneighbors(?::(\d+)-(\d+))?", s)
        if m:
            if m.group(1):
                return cls("randneighbors", lo=int(m.group(1)), hi=int(m.group(2)))
            return cls("randneighbors")
        raise PatternError(f"unrecognised traffic pattern {text!r}")

    def __str__(self):
        if self.kind == "adv":
            return f"adv:{self.offset}"
        if self.kind in ("stencil3d", "m2m"):
            return f"{self.kind}:{'x'.join(map(str, self.dims))}"
        if self.kind == "randneighbors":
            return f"randneighbors:{self.lo}-{self.hi}"
        return self.kind

    def validate(self, topo):
        if self.kind == "adv" and not 1 <= self.offset < topo.g:
            raise PatternError(f"ADV offset must satisfy 1 <= i < g={topo.g}")
        if self.kind in ("stencil3d", "m2m") and math.prod(self.dims) != topo.nodes:
            raise PatternError(f"grid {self.dims} does not cover N={topo.nodes} nodes")
        if self.kind == "randneighbors":
            if not 1 <= self.lo <= self.hi:
                raise PatternError("random-neighbor bounds must satisfy 1 <= min <= max")
            if self.hi > topo.nodes - 1:
                raise PatternError("more random neighbors than other nodes")


@dataclass
class LoadSchedule:
    """Piecewise-constant offered load: ``[(start_ns, load), ...]`` from t=0."""

    segments: list = field(default_factory=list)

    @classmethod
    def constant(cls, load):
        return cls([(0, float(load))])

    @classmethod
    def parse(cls, text):
        pairs = re.findall(r"\(\s*([0-9.eE+]+)\s*,\s*([0-9.eE+-]+)\s*\)", text)
        if not pairs:
            raise PatternError(f"cannot parse load schedule {text!r}")
        return cls([(int(float(t)), float(v)) for t, v in pairs])

    def __post_init__(self):
        segs = [(int(t), float(v)) for t, v in self.segments]
        if not segs:
            raise PatternError("empty load schedule")
        if segs[0][0] != 0:
            segs.insert(0, (0, 0.0))
        for (t0, _), (t1, _) in zip(segs, segs[1:]):
            if t1 <= t0:
                raise PatternError("load schedule segments must be strictly ordered")
        for _, v in segs:
            if not 0.0 <= v <= 1.0:
                raise PatternError(f"offered load {v} outside [0, 1]")
        self.segments = segs

    def __str__(self):
        return "[" + ",".join(f"({t},{v!r})" for t, v in self.segments) + "]"

    def load_at(self, t):
        cur = 0.0
        for start, v in self.segments:
            if start > t:
                break
            cur = v
        return cur


def generation_interval(load, packet_bytes=128, bandwidth_bytes_per_ns=4.0):
    """Nanoseconds between consecutive packets of one node; ``inf`` at zero load."""
    if load < 0 or load > 1:
        raise PatternError(f"offered load {load} outside [0, 1]")
    if load == 0:
        return math.inf
    return packet_bytes / (load * bandwidth_bytes_per_ns)


def grid_coords(n, dims):
    X, Y, _ = dims
    return n % X, (n // X) % Y, n // (X * Y)


def grid_node(x, y, z, dims):
    X, Y, _ = dims
    return x + X * (y + Y * z)


def stencil_neighbors(n, dims):
    """Non-periodic 6-point neighbors of node ``n`` in -x,+x,-y,+y,-z,+z order."""
    x, y, z = grid_coords(n, dims)
    out = []
    for axis in range(3):
        for step in (-1, 1):
            c = [x, y, z]
            c[axis] += step
            if 0 <= c[axis] < dims[axis]:
                out.append(grid_node(*c, dims))
    return out


def z_communicator(n, dims):
    x, y, _ = grid_coords(n, dims)
    return [grid_node(x, y, z, dims) for z in range(dims[2]) if grid_node(x, y, z, dims) != n]


def random_neighbor_sets(nodes, lo, hi, rng):
    """Fixed per-node target sets; sizes uniform in [lo, hi], targets distinct."""
    sets = []
    for n in range(nodes):
        size = lo + rng.randbelow(hi - lo + 1)
        chosen = []
        seen = {n}
        while len(chosen) < size:
            t = rng.randbelow(nodes)
            if t not in seen:
                seen.add(t)
                chosen.append(t)
        sets.append(chosen)
    return sets


@dataclass
class CompiledTraffic:
    """Flat description handed to the simulation cores."""

    mode: int
    offset: int
    targets_ptr: np.ndarray
    targets: np.ndarray


def compile_pattern(pattern: TrafficPattern, topo, rng) -> CompiledTraffic:
    """Resolve table-driven patterns; ``rng`` is the traffic stream (consumed at setup)."""
    pattern.validate(topo)
    N = topo.nodes
    if pattern.kind == "ur":
        return CompiledTraffic(UR, 0, np.zeros(1, np.int64), np.zeros(0, np.int32))
    if pattern.kind == "adv":
        return CompiledTraffic(ADV, pattern.offset, np.zeros(1, np.int64), np.zeros(0, np.int32))
    if pattern.kind == "stencil3d":
        lists = [stencil_neighbors(n, pattern.dims) for n in range(N)]
        mode = ROUND_ROBIN
    elif pattern.kind == "m2m":
        lists = [z_communicator(n, pattern.dims) for n in range(N)]
        mode = ROUND_ROBIN
    else:
        lists = random_neighbor_sets(N, pattern.lo, pattern.hi, rng)
        mode = RANDOM_TARGET
    ptr = np.zeros(N + 1, np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    flat = np.array([t for x in lists for t in x], dtype=np.int32)
    return CompiledTraffic(mode, 0, ptr, flat)


def pick_destination(node, compiled: CompiledTraffic, topo, rng, cursor):
    """Next destination of ``node``.  ``cursor`` is a per-node round-robin list."""
    mode = compiled.mode
    if mode == UR:
        d = rng.randbelow(topo.nodes - 1)
        return d + 1 if d >= node else d
    if mode == ADV:
        group_nodes = topo.a * topo.p
        G = (node // group_nodes + compiled.offset) % topo.g
        return G * group_nodes + rng.randbelow(group_nodes)
    lo = int(compiled.targets_ptr[node])
    count = int(compiled.targets_ptr[node + 1]) - lo
    if count == 0:
        return -1
    if mode == ROUND_ROBIN:
        i = cursor[node]
        cursor[node] = (i + 1) % count
        return int(compiled.targets[lo + i])
    return int(compiled.targets[lo + rng.randbelow(count)])
