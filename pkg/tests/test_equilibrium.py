import itertools
import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

import popfare.equilibrium as eq
from conftest import random_instance
from popfare.equilibrium import compute_ic_equilibrium
from popfare.network import DemandMatrix, TransitNetwork, path_edges
from popfare.pricing import MonitoringPlan, uniform_plan


def full_demand(net, rng):
    s = sorted(net.station_set)
    return DemandMatrix({(o, d): rng.uniform(0.5, 5) for o in s for d in s if o != d})


def test_requires_full_support():
    net = TransitNetwork.from_edges([("a", "b"), ("b", "c")])
    with pytest.raises(ValueError):
        compute_ic_equilibrium(net, DemandMatrix({("a", "b"): 1.0}), uniform_plan(net, 1.0), 1.0)


def test_line_network_is_immediate():
    net = TransitNetwork.from_edges([("a", "b"), ("b", "c")])
    dm = full_demand(net, random.Random(1))
    flows, prices, report = compute_ic_equilibrium(net, dm, uniform_plan(net, 2.0), 3.0)
    assert report.converged and report.iterations == 1 and report.is_equilibrium
    assert prices[("a", "b")] == pytest.approx(3.0 * 1.0 / flows[("a", "b")])
    assert report.as_dict()["equilibrium_violations"] == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_exit_state_has_no_cheaper_simple_path(seed):
    rng = random.Random(seed)
    net, _, plan, alpha, _ = random_instance(rng)
    dm = full_demand(net, rng)
    flows, prices, report = compute_ic_equilibrium(net, dm, plan, max(alpha, 0.1))
    assert report.converged and report.is_equilibrium
    g = nx.Graph(list(net.edge_set))
    g.add_nodes_from(net.station_set)
    for (o, d), _ in dm.positive():
        # the routed path's price is the cheapest simple-path price
        best = min(sum(prices[e] for e in path_edges(p)) for p in nx.all_simple_paths(g, o, d))
        routed = eq._cheapest(net, DemandMatrix({(o, d): 1.0}), dict(prices.entries))[(o, d)]
        assert sum(prices[e] for e in path_edges(routed)) <= best + 1e-9 * max(1.0, best)


def test_unused_edge_gets_infinite_price():
    # triangle where the heavily monitored edge b-c attracts nobody
    net = TransitNetwork.from_edges([("a", "b"), ("a", "c"), ("b", "c")])
    dm = DemandMatrix({(o, d): 1.0 for o, d in itertools.permutations("abc", 2)})
    plan = MonitoringPlan({("a", "b"): 0.01, ("a", "c"): 0.01, ("b", "c"): 100.0})
    flows, prices, report = compute_ic_equilibrium(net, dm, plan, 1.0)
    assert report.converged
    assert flows[("b", "c")] == 0 and prices[("b", "c")] == float("inf")


def test_oscillation_switches_to_damping(monkeypatch):
    net = TransitNetwork.from_edges([("a", "b"), ("b", "c"), ("c", "d"), ("a", "d")])
    dm = full_demand(net, random.Random(0))
    real = eq._cheapest
    calls = itertools.count()

    def flip(net_, demand, cost):
        routes = real(net_, demand, cost)
        if cost is not None:
            routes[("a", "c")] = ("a", "b", "c") if next(calls) % 2 else ("a", "d", "c")
        return routes

    monkeypatch.setattr(eq, "_cheapest", flip)
    _, _, report = compute_ic_equilibrium(net, dm, uniform_plan(net, 4.0), 1.0, max_iterations=30)
    assert report.damped and not report.converged
    assert report.iterations == 30
