import random

import networkx as nx
import pytest

from popfare.network import EdgeFlows, TransitNetwork
from popfare.pricing import MonitoringPlan, PricingScheme, ic_edge_prices, uniform_plan


def random_instance(rng: random.Random, max_stations: int = 6):
    """Connected random graph with random flows, plan, fine and a partial tariff."""
    n = rng.randint(2, max_stations)
    names = [f"s{i}" for i in range(n)]
    while True:
        g = nx.gnp_random_graph(n, rng.uniform(0.3, 0.9), seed=rng.randrange(10**9))
        if nx.is_connected(g):
            break
    net = TransitNetwork.from_edges([(names[a], names[b]) for a, b in g.edges()], names)
    flows = EdgeFlows({e: rng.uniform(1, 50) for e in net.edge_set})
    plan = MonitoringPlan({e: rng.uniform(0.5, 5) for e in net.edge_set})
    alpha = rng.uniform(0, 20)
    prices = PricingScheme(
        {(a, b): rng.uniform(0.05, 3) for a in names for b in names if a < b and rng.random() < 0.85}
    )
    return net, flows, plan, alpha, prices


@pytest.fixture
def three_node():
    """x - y - z line with unit flows and IC edge prices of 0.70."""
    net = TransitNetwork.from_edges([("x", "y"), ("y", "z")])
    flows = EdgeFlows({("x", "y"): 1.0, ("y", "z"): 1.0})
    plan = uniform_plan(net, 1.4)
    alpha = 1.0
    legacy = PricingScheme({("x", "y"): 0.50, ("y", "z"): 1.00, ("x", "z"): 1.50})
    return net, flows, plan, alpha, legacy, ic_edge_prices(plan, flows, alpha)


ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
