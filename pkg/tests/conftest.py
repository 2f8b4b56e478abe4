import pytest

from qadaptive.routing import RoutingAlgorithm
from qadaptive.sim import BACKENDS, make_simulator
from qadaptive.simsetup import make_setup
from qadaptive.topology import DragonflyParams, build_topology
from qadaptive.traffic import LoadSchedule, TrafficPattern

ALL_ROUTINGS = ("min", "valg", "valn", "ugalg", "ugaln", "par", "qrouting", "qadaptive")
FAST_BACKEND = "cython" if "cython" in BACKENDS else "python"


@pytest.fixture(scope="session")
def desk():
    return build_topology(DragonflyParams(2, 4, 2))


@pytest.fixture(scope="session")
def topo1056():
    return build_topology(DragonflyParams(4, 8, 4))


def simulator(topo, routing="min", pattern="ur", load=0.0, seed=1, backend=FAST_BACKEND,
              maxq=3, bias=0, **kw):
    """Simulator on ``topo``; a float load means a constant schedule."""
    schedule = load if isinstance(load, LoadSchedule) else LoadSchedule.constant(load)
    setup = make_setup(topo, RoutingAlgorithm.from_name(routing, maxq=maxq, bias=bias),
                       TrafficPattern.parse(pattern), schedule, seed, **kw)
    return make_simulator(setup, backend)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
