import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_instance
from popfare.errors import ConvergenceError
from popfare.network import EdgeFlows, TransitNetwork
from popfare.pricing import (
    AdjustmentTrace,
    EdgePriceTable,
    MonitoringPlan,
    PricingScheme,
    calibrate_alpha,
    cap_and_adjust,
    check_alpha,
    edge_inspection_prob,
    ic_edge_prices,
    inspector_mass_from_staffing,
    naive_cap,
    od_ic_prices,
    proportional_plan,
    uniform_plan,
)
from popfare.strategy import check_incentive_compatibility
from popfare.technology import MonitoringTechnology


def test_staffing_gives_4013():
    assert inspector_mass_from_staffing() == 4013
    assert uniform_plan(TransitNetwork.from_edges([(f"s{i}", f"s{i + 1}") for i in range(88)]), 4013)[("s0", "s1")] == pytest.approx(45.60, abs=0.005)
    assert inspector_mass_from_staffing(round_steps=False) == pytest.approx(30 * 360 / 2.69)


def test_alpha_validation():
    assert check_alpha(0.0) == 0.0
    for bad in (-1, float("nan"), float("inf")):
        with pytest.raises(ValueError):
            check_alpha(bad)


def test_edge_price_formula():
    plan = MonitoringPlan({("a", "b"): 2.0, ("b", "c"): 1.0}, MonitoringTechnology.power(0.5))
    flows = EdgeFlows({("a", "b"): 4.0, ("b", "c"): 0.5})
    assert edge_inspection_prob(plan, flows, ("b", "a")) == pytest.approx(2 ** 0.5 / 4)
    prices = ic_edge_prices(plan, flows, 10.0)
    assert prices[("a", "b")] == pytest.approx(10 * 2 ** 0.5 / 4)
    # expected inspection count above one is allowed
    assert prices[("b", "c")] == pytest.approx(20.0)


def test_zero_flow_rejected():
    plan = MonitoringPlan({("a", "b"): 1.0})
    with pytest.raises(ZeroDivisionError):
        ic_edge_prices(plan, EdgeFlows({("a", "b"): 0.0}), 1.0)


def test_plan_requires_positive_mass():
    with pytest.raises(ValueError):
        MonitoringPlan({("a", "b"): 0.0})


def test_calibrate_nonlinear_matches_revenue():
    net = TransitNetwork.from_edges([("a", "b"), ("b", "c")])
    flows = EdgeFlows({("a", "b"): 10.0, ("b", "c"): 3.0})
    plan = uniform_plan(net, 8.0, MonitoringTechnology.power(0.5))
    alpha = calibrate_alpha(123.0, plan, flows, solve=True)
    revenue = sum(p * flows[e] for e, p in ic_edge_prices(plan, flows, alpha).items())
    assert revenue == pytest.approx(123.0, rel=1e-10)
    with pytest.raises(ValueError):
        calibrate_alpha(123.0, plan, flows)


def test_pricing_scheme_is_symmetric_and_canonical():
    s = PricingScheme({("b", "a"): 1.5})
    assert s[("a", "b")] == s[("b", "a")] == 1.5 and ("a", "b") in s
    with pytest.raises(ValueError):
        PricingScheme({("a", "b"): 1.0, ("b", "a"): 2.0})
    with pytest.raises(ValueError):
        PricingScheme({("a", "a"): 1.0})
    with pytest.raises(ValueError):
        PricingScheme({("a", "b"): 1.0}, "mystery")


def test_od_prices_are_path_minimum():
    net = TransitNetwork.from_edges([("a", "b"), ("b", "c"), ("a", "c")])
    edges = EdgePriceTable({("a", "b"): 1.0, ("b", "c"): 1.0, ("a", "c"): 5.0})
    od = od_ic_prices(net, edges)
    assert od[("a", "c")] == 2.0 and od.provenance == "ic"


def test_naive_cap_is_pairwise_min():
    legacy = PricingScheme({("a", "b"): 1.0})
    ic = PricingScheme({("a", "b"): 2.0, ("a", "c"): 0.3}, "ic")
    out = naive_cap(legacy, ic)
    assert out[("a", "b")] == 1.0 and out[("a", "c")] == 0.3


def test_cap_and_adjust_golden_trace(three_node):
    net, flows, plan, alpha, legacy, edge_prices = three_node
    trace = AdjustmentTrace()
    capped = cap_and_adjust(legacy, edge_prices, net, alpha, plan, flows, trace=trace)
    assert capped.provenance == "capped-ic"
    assert trace.iterations == 2 and trace.changed == [1, 0]
    assert capped[("x", "z")] == pytest.approx(1.2, abs=1e-12)


def test_cap_and_adjust_rejects_inconsistent_inputs(three_node):
    net, flows, plan, alpha, legacy, edge_prices = three_node
    with pytest.raises(ValueError):
        cap_and_adjust(legacy, edge_prices, net, 2.0 * alpha, plan, flows)


def test_cap_and_adjust_iteration_limit(three_node):
    net, flows, plan, alpha, legacy, edge_prices = three_node
    with pytest.raises(ConvergenceError) as exc:
        cap_and_adjust(legacy, edge_prices, net, max_iterations=1)
    assert exc.value.exit_code == 5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_capped_prices_ic_and_below_legacy(seed):
    net, flows, plan, alpha, legacy = random_instance(random.Random(seed))
    edge_prices = ic_edge_prices(plan, flows, alpha)
    ic = od_ic_prices(net, edge_prices)
    for model in ("multi", "single"):
        capped = cap_and_adjust(legacy, edge_prices, net, alpha, plan, flows, model=model)
        for od, p in capped.items():
            assert p <= ic[od] + 1e-12
            if od in legacy:
                assert p <= legacy[od] + 1e-12
        assert check_incentive_compatibility(capped, plan, flows, net, alpha, model) == []


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 1e4))
def test_proportional_plan_flat(seed, lam_total):
    net, flows, *_ = random_instance(random.Random(seed))
    prices = ic_edge_prices(proportional_plan(net, flows, lam_total), flows, 2.0)
    flat = 2.0 * lam_total / flows.total()
    assert all(p == pytest.approx(flat, rel=1e-12) for _, p in prices.items())
