"""Route equilibrium with endogenous IC edge prices.

Passengers pay full fares and pick the cheapest path; edge prices follow
``alpha * phi(lambda) / flow``. We iterate assignment -> flows -> prices from
the hop-count loading. Once the iteration revisits an earlier state it
switches to averaging path flows with the new assignment.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Tuple

from popfare.network import DemandMatrix, EdgeFlows, TransitNetwork, path_edges, shortest_paths_from
from popfare.pricing import EdgePriceTable, MonitoringPlan, check_alpha

log = logging.getLogger(__name__)


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)
    damped: bool = False
    equilibrium_gaps: dict = field(default_factory=dict)  # OD -> worst used path price minus cheapest

    @property
    def is_equilibrium(self) -> bool:
        return not self.equilibrium_gaps

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.residuals[-1] if self.residuals else 0.0,
            "damped": self.damped,
            "equilibrium_violations": len(self.equilibrium_gaps),
        }


def _edge_prices(plan: MonitoringPlan, flows: dict, alpha: float) -> dict:
    out = {}
    for e, lam in plan.entries.items():
        sigma = flows[e]
        out[e] = alpha * float(plan.technology(lam)) / sigma if sigma > 0 else math.inf
    return out


def _cheapest(net: TransitNetwork, demand: DemandMatrix, cost) -> dict:
    by_origin = defaultdict(list)
    for od, _ in demand.positive():
        by_origin[od[0]].append(od[1])
    routes = {}
    for o in sorted(by_origin):
        paths = shortest_paths_from(net, o, cost)
        for d in by_origin[o]:
            routes[(o, d)] = paths[d]
    return routes


def _load(net: TransitNetwork, path_flows: dict) -> dict:
    flows = {e: 0.0 for e in net.edge_set}
    for split in path_flows.values():
        for path, mass in split.items():
            for e in path_edges(path):
                flows[e] += mass
    return flows


def compute_ic_equilibrium(
    net: TransitNetwork,
    demand: DemandMatrix,
    plan: MonitoringPlan,
    alpha: float,
    max_iterations: int = 200,
    tolerance: float = 1e-9,
    damping: float = 0.5,
) -> Tuple[EdgeFlows, EdgePriceTable, ConvergenceReport]:
    """Returns flows, the IC edge prices they induce, and a convergence report.

    ``tolerance`` is relative to the largest edge flow. The report lists OD
    pairs that still carry flow on a path dearer than their cheapest one.
    """
    alpha = check_alpha(alpha)
    net.require_valid()
    demand.require_full_support(net)
    plan.check_covers(net)
    mass = dict(demand.positive())
    path_flows = {od: {p: mass[od]} for od, p in _cheapest(net, demand, None).items()}
    flows = _load(net, path_flows)
    report = ConvergenceReport(False, 0)
    seen = [tuple(sorted(flows.items()))]
    for it in range(1, max_iterations + 1):
        prices = _edge_prices(plan, flows, alpha)
        routes = _cheapest(net, demand, prices)
        target = {od: {p: mass[od]} for od, p in routes.items()}
        target_flows = _load(net, target)
        scale = max(1.0, max(flows.values()))
        residual = max(abs(target_flows[e] - flows[e]) for e in flows) / scale
        report.iterations = it
        report.residuals.append(residual)
        if residual <= tolerance:
            report.converged = True
            break
        if not report.damped and tuple(sorted(target_flows.items())) in seen:
            log.info("assignment cycles at iteration %d; averaging path flows", it)
            report.damped = True
        if report.damped:
            mixed = {}
            for od in path_flows:
                split = defaultdict(float)
                for p, m in path_flows[od].items():
                    split[p] += (1 - damping) * m
                for p, m in target[od].items():
                    split[p] += damping * m
                mixed[od] = {p: m for p, m in split.items() if m > 1e-15 * mass[od]}
            path_flows = mixed
        else:
            path_flows = target
        flows = _load(net, path_flows)
        seen.append(tuple(sorted(flows.items())))
    else:
        log.warning("equilibrium iteration stopped after %d rounds (residual %.3e)", max_iterations, report.residuals[-1])

    prices = _edge_prices(plan, flows, alpha)
    routes = _cheapest(net, demand, prices)
    for od, split in path_flows.items():
        cheapest = sum(prices[e] for e in path_edges(routes[od]))
        worst = max(sum(prices[e] for e in path_edges(p)) for p, m in split.items() if m > tolerance * mass[od])
        if worst > cheapest + 1e-9 * max(1.0, cheapest):
            report.equilibrium_gaps[od] = worst - cheapest
    return EdgeFlows(flows), EdgePriceTable(prices), report
