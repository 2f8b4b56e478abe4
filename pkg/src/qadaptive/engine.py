"""Deterministic discrete-event machinery shared by both simulation cores.

Time is an integer number of nanoseconds.  Events at equal time pop in the
order they were scheduled.  Random streams are SplitMix64 generators so the
compiled core can reproduce the exact same draws bit for bit.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import IntEnum

MASK64 = (1 << 64) - 1


class EventKind(IntEnum):
    PACKET_GEN = 0
    LINK_ARRIVAL = 1
    TRY_FORWARD = 2
    CREDIT_RETURN = 3
    FEEDBACK_ARRIVAL = 4
    METRICS_TICK = 5
    LOAD_CHANGE = 6
    NODE_CREDIT = 7
    NODE_SEND = 8
    DELIVER = 9


class SimulationError(RuntimeError):
    pass


class ContractViolation(SimulationError):
    """A model invariant broke (credit protocol, scheduling into the past...)."""


class DeadlockError(SimulationError):
    pass


@dataclass
class SimulationSummary:
    events: int
    clock: int


class EventQueue:
    """Binary heap of ``(time, seq, kind, a, b, c)`` tuples."""

    __slots__ = ("_heap", "_seq", "now", "processed")

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0
        self.processed = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time, kind, a=0, b=0, c=None):
        if time < self.now:
            raise ContractViolation(f"event {kind!r} scheduled at {time} < now {self.now}")
        heapq.heappush(self._heap, (time, self._seq, kind, a, b, c))
        self._seq += 1

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def pop(self):
        ev = heapq.heappop(self._heap)
        self.now = ev[0]
        self.processed += 1
        return ev


# stream tags; mixed into the user seed so streams never share state
TRAFFIC, EXPLORE, VAL = 1, 2, 3
STREAM_NAMES = {"traffic": TRAFFIC, "routing-exploration": EXPLORE, "val-intermediate": VAL}

_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_seed(seed: int, tag: int) -> int:
    return splitmix64((seed & MASK64) ^ splitmix64(tag))


class RngStream:
    __slots__ = ("state",)

    def __init__(self, seed: int, tag: int | str):
        if isinstance(tag, str):
            tag = STREAM_NAMES[tag]
        self.state = stream_seed(seed, tag)

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by multiply-shift on the top 32 bits."""
        return ((self.next_u64() >> 32) * n) >> 32
