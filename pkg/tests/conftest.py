import pytest

from sdaas.core import Node, ProviderConfig, Request, Segment, SkywayNetwork, TimeWindow
from sdaas.energy import EnergyParams


def line_network(dists, pads=1):
    nodes = [Node(i, (float(sum(dists[:i])), 0.0), pads) for i in range(len(dists) + 1)]
    segs = [Segment(i, i + 1, d) for i, d in enumerate(dists)]
    return SkywayNetwork(nodes, segs)


@pytest.fixture
def two_node_net():
    return SkywayNetwork([Node(0, (0.0, 0.0), 1), Node(1, (2000.0, 0.0), 1)],
                         [Segment(0, 1, 2000.0)])


@pytest.fixture
def example_energy():
    return EnergyParams(rate_empty=0.05, payload_factor=1.0, full_charge_time=1000.0,
                        speed=10.0, payload_capacity=2.5)


@pytest.fixture
def small_provider():
    return ProviderConfig(fleet_size=6, source=0, max_swarm_size=5)


def make_request(rid=0, dest=1, packages=(1.0,), st=0.0, et=3600.0):
    return Request(rid, dest, packages, TimeWindow(st, et))


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
