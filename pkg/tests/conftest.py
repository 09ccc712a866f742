"""Shared fixtures: small hand-checkable networks and order factories."""

import pytest

from poolsim import synth
from poolsim.demand import Order
from poolsim.netgraph import RoadNetwork


@pytest.fixture(scope="session")
def grid10():
    return synth.grid_network(10, 10, 500.0)


@pytest.fixture(scope="session")
def grid5():
    return synth.grid_network(5, 5, 400.0)


@pytest.fixture
def line_net():
    """A <-> B <-> C line, 1000 m blocks, bidirectional."""
    nodes = [("A", 0.0, 0.0), ("B", 0.01, 0.0), ("C", 0.02, 0.0)]
    edges = [("A", "B", 1000.0), ("B", "A", 1000.0),
             ("B", "C", 1000.0), ("C", "B", 1000.0)]
    return RoadNetwork(nodes, edges)


@pytest.fixture
def overlap_net():
    """Directed chain A->B->C->D (2 + 5 + 1 km) plus the direct A->D
    shortcut of 6 km. The chain is the only interleaved pooled route for
    an A->D rider and a B->C rider; the shortcut fixes the first rider's
    shortest distance at 6 km."""
    nodes = [("A", 0.0, 0.0), ("B", 0.02, 0.0), ("C", 0.07, 0.0), ("D", 0.08, 0.0)]
    edges = [("A", "B", 2000.0), ("B", "C", 5000.0),
             ("C", "D", 1000.0), ("A", "D", 6000.0)]
    return RoadNetwork(nodes, edges)


@pytest.fixture
def overlap_orders(overlap_net):
    r1 = Order("c1", "A", "D", 0.0, overlap_net.distance("A", "D"))
    r2 = Order("c2", "B", "C", 0.0, overlap_net.distance("B", "C"))
    return r1, r2


def make_order(network, oid, origin, dest, t=0.0):
    d = network.distance(origin, dest)
    assert d is not None and d > 0
    return Order(oid, origin, dest, t, d)
