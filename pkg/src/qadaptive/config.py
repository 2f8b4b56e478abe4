"""Run configuration: flat ``key = value`` text, CLI overrides and presets.

Four keys may hold several values and define a sweep: ``pattern``,
``load``, ``routing`` and ``seed``.  Lists are comma separated; loads and
seeds also accept ranges such as ``0.1..1.0 step 0.1`` or ``1..3``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import math
import re
from dataclasses import dataclass, field, fields

from .qlearn import QHyperParams
from .routing import TAGS, RoutingAlgorithm
from .topology import DragonflyParams, build_topology
from .traffic import LoadSchedule, PatternError, TrafficPattern

SWEEP_KEYS = ("pattern", "load", "routing", "seed")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    # topology
    p: int = 2
    a: int = 4
    h: int = 2
    # routing
    routing: str = "qadaptive"
    ugal_bias: int = 0
    maxq: int = 3
    alpha: float = 0.2
    beta: float = 0.04
    epsilon: float = 0.001
    q_thld1: float = 0.2
    q_thld2: float = 0.35
    # traffic
    pattern: str = "ur"
    load: float = 0.5
    load_schedule: str = ""
    # timing and buffers
    packet_bytes: int = 128
    bandwidth_gbps: float = 4.0
    local_latency_ns: int = 30
    global_latency_ns: int = 300
    host_latency_ns: int = 30
    router_latency_ns: int = 0
    vc_buffer: int = 20
    # run control
    seed: int = 1
    warmup: str = "fixed"            # fixed | converge
    warmup_ns: int = 100_000
    warmup_max_ns: int = 1_000_000
    measure_ns: int = 100_000
    t_end_ns: int = 0                # 0: warmup + measurement
    window_ns: int = 10_000
    converge_tolerance: float = 0.1
    converge_hold: int = 5
    deadlock_ns: int = 200_000
    backend: str = "auto"
    audit: bool = False
    # outputs
    out: str = "results"
    trace: bool = False
    dump_topology: bool = False
    qtable_snapshot_ns: str = ""     # comma-separated times
    qtable_routers: str = "0"        # comma-separated router ids

    # ------------------------------------------------------------------ derived objects
    def params(self):
        return DragonflyParams(self.p, self.a, self.h)

    def algorithm(self):
        return RoutingAlgorithm.from_name(self.routing, maxq=self.maxq, bias=self.ugal_bias)

    def hyper(self):
        return QHyperParams(self.alpha, self.beta, self.epsilon, self.q_thld1, self.q_thld2)

    def traffic_pattern(self):
        return TrafficPattern.parse(self.pattern)

    def schedule(self):
        if self.load_schedule:
            return LoadSchedule.parse(self.load_schedule)
        return LoadSchedule.constant(self.load)

    def snapshot_times(self):
        return _int_list(self.qtable_snapshot_ns)

    def snapshot_routers(self):
        return _int_list(self.qtable_routers)

    @property
    def run_end(self):
        """Scheduled end of a fixed-warmup run."""
        return self.t_end_ns or self.warmup_ns + self.measure_ns

    # ------------------------------------------------------------------ validation
    def validate(self):
        """Check every key before a run starts; raises ``ConfigError``."""
        try:
            params = self.params()
        except ValueError as e:
            raise ConfigError("p/a/h", str(e)) from None
        if self.routing.lower() not in TAGS:
            raise ConfigError("routing", f"unknown routing {self.routing!r}; choose from {sorted(TAGS)}")
        if self.maxq < 0:
            raise ConfigError("maxq", "must be non-negative")
        try:
            self.hyper()
        except ValueError as e:
            raise ConfigError(str(e).split()[0], str(e)) from None
        try:
            pat = self.traffic_pattern()
            pat.validate(build_topology(params))
        except PatternError as e:
            raise ConfigError("pattern", str(e)) from None
        if not 0.0 <= self.load <= 1.0:
            raise ConfigError("load", f"offered load {self.load} outside [0, 1]")
        try:
            self.schedule()
        except PatternError as e:
            raise ConfigError("load_schedule", str(e)) from None
        ser = self.packet_bytes / self.bandwidth_gbps
        if ser <= 0 or ser != math.floor(ser):
            raise ConfigError("packet_bytes", f"serialization time {ser} ns must be a positive integer")
        for key in ("local_latency_ns", "global_latency_ns", "host_latency_ns", "router_latency_ns"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be non-negative")
        if self.vc_buffer < 1:
            raise ConfigError("vc_buffer", "must be at least 1")
        if self.warmup not in ("fixed", "converge"):
            raise ConfigError("warmup", "must be 'fixed' or 'converge'")
        for key in ("window_ns", "measure_ns", "deadlock_ns"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, "must be positive")
        if self.warmup_ns < 0:
            raise ConfigError("warmup_ns", "must be non-negative")
        if self.t_end_ns and self.t_end_ns < self.warmup_ns + self.measure_ns:
            raise ConfigError("t_end_ns", "must cover warmup_ns + measure_ns")
        if self.measure_ns % self.window_ns:
            raise ConfigError("measure_ns", "must be a multiple of window_ns")
        if self.backend not in ("auto", "python", "cython"):
            raise ConfigError("backend", "must be auto, python or cython")
        if not 0 < self.converge_tolerance < 1:
            raise ConfigError("converge_tolerance", "must lie in (0, 1)")
        if self.converge_hold < 1:
            raise ConfigError("converge_hold", "must be at least 1")
        try:
            routers = self.snapshot_routers()
            self.snapshot_times()
        except ValueError as e:
            raise ConfigError("qtable_snapshot_ns", str(e)) from None
        if any(not 0 <= r < params.m for r in routers):
            raise ConfigError("qtable_routers", f"router ids must lie in [0, {params.m})")
        return self

    # ------------------------------------------------------------------ text form
    def to_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def config_hash(self):
        """Short digest of the model keys; seed, backend and output paths are left out."""
        skip = ("out =", "seed =", "backend =")
        text = "\n".join(line for line in self.to_text().splitlines() if not line.startswith(skip))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _int_list(text):
    text = str(text).strip()
    if not text:
        return []
    return [int(x) for x in text.split(",") if x.strip()]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, raw):
    typ = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError(f"not an integer: {raw!r}")
            return int(v)
        if typ == "float":
            return float(raw)
    except ValueError as e:
        raise ConfigError(key, str(e)) from None
    return raw


def expand_values(key, raw):
    """All values a sweep key takes, in the order written."""
    raw = raw.strip()
    if key in ("load", "seed"):
        m = re.fullmatch(r"([0-9.eE+-]+)\s*\.\.\s*([0-9.eE+-]+)(?:\s+step\s+([0-9.eE+-]+))?", raw)
        if m:
            lo, hi = float(m.group(1)), float(m.group(2))
            step = float(m.group(3)) if m.group(3) else 1.0
            if step <= 0:
                raise ConfigError(key, "range step must be positive")
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            vals = [round(lo + i * step, 10) for i in range(count)]
            return [_convert(key, repr(v)) for v in vals]
    if key in SWEEP_KEYS:
        return [_convert(key, part) for part in raw.split(",") if part.strip()]
    return [_convert(key, raw)]


@dataclass
class Matrix:
    """A base configuration plus the values of each sweep key."""

    base: RunConfig
    axes: dict = field(default_factory=dict)

    def cells(self):
        """Configurations in pattern x routing x load x seed order."""
        order = ("pattern", "routing", "load", "seed")
        values = [self.axes.get(k, [getattr(self.base, k)]) for k in order]
        out = []
        for combo in itertools.product(*values):
            out.append(dataclasses.replace(self.base, **dict(zip(order, combo))))
        return out

    def set(self, key, raw):
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown configuration key")
        vals = expand_values(key, raw)
        if key in SWEEP_KEYS and len(vals) != 1:
            self.axes[key] = vals
        else:
            self.axes.pop(key, None)
            setattr(self.base, key, vals[0])

    def to_text(self):
        lines = []
        for line in self.base.to_text().splitlines():
            key = line.split(" = ", 1)[0]
            if key in self.axes:
                line = f"{key} = " + ",".join(_format_value(v) for v in self.axes[key])
            lines.append(line)
        return "\n".join(lines) + "\n"


def parse_text(text, matrix=None):
    """Apply ``key = value`` lines (``#`` comments allowed) onto a matrix."""
    matrix = matrix or Matrix(RunConfig())
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, raw = line.split("=", 1)
        matrix.set(key.strip(), raw)
    return matrix


# presets apply before the config file and --set overrides
PRESETS = {
    "desk-72": "p = 2\na = 4\nh = 2\n",
    "paper-1056": "p = 4\na = 8\nh = 4\n",
    "paper-2550": "p = 5\na = 10\nh = 5\nq_thld1 = 0.05\nq_thld2 = 0.4\n",
    "figure5": ("p = 2\na = 4\nh = 2\npattern = ur,adv:1,adv:4\n"
                "routing = min,valg,valn,ugalg,ugaln,par,qadaptive\n"
                "load = 0.1..1.0 step 0.1\n"),
    "figure6": ("p = 2\na = 4\nh = 2\npattern = ur,adv:1,adv:4\n"
                "routing = min,valg,valn,ugalg,ugaln,par,qadaptive\n"
                "load = 0.45,0.8\n"),
}


def build_matrix(preset=None, config_text=None, overrides=()):
    matrix = Matrix(RunConfig())
    if preset:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        parse_text(PRESETS[preset], matrix)
    if config_text:
        parse_text(config_text, matrix)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        matrix.set(key.strip(), raw)
    return matrix
