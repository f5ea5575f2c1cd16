"""Inspector allocation on edges, IC edge/OD prices, fine calibration and
the capped-IC downward adjustment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Tuple

from scipy.optimize import brentq

from popfare.errors import ConvergenceError
from popfare.network import (
    DemandMatrix,
    Edge,
    EdgeFlows,
    TransitNetwork,
    edge_key,
    shortest_paths_from,
    path_edges,
)
from popfare.technology import MonitoringTechnology

log = logging.getLogger(__name__)

PROVENANCE = ("legacy", "ic-uniform", "ic-proportional", "ic", "capped-ic")


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0 <= alpha < float("inf"):
        raise ValueError(f"fine level must be finite and non-negative, got {alpha}")
    return alpha


@dataclass(frozen=True)
class MonitoringPlan:
    entries: Mapping[Edge, float]
    technology: MonitoringTechnology = field(default_factory=MonitoringTechnology.identity)
    kind: str = "explicit"

    def __post_init__(self):
        clean = {}
        for e, v in self.entries.items():
            v = float(v)
            if not v > 0:
                raise ValueError(f"inspector mass on {e} must be positive, got {v}")
            clean[edge_key(*e)] = v
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(clean.items()))))

    @property
    def total(self) -> float:
        return float(sum(self.entries.values()))

    def __getitem__(self, edge: Edge) -> float:
        return self.entries[edge_key(*edge)]

    def check_covers(self, net: TransitNetwork) -> None:
        if set(self.entries) != set(net.edge_set):
            extra = sorted(set(self.entries) - set(net.edge_set))
            missing = sorted(set(net.edge_set) - set(self.entries))
            raise ValueError(f"monitoring plan does not match network edges (missing {missing[:3]}, extra {extra[:3]})")


@dataclass(frozen=True)
class EdgePriceTable:
    """Per-edge IC prices. ``inf`` marks a monitored edge nobody rides."""

    entries: Mapping[Edge, float]

    def __post_init__(self):
        clean = {}
        for e, v in self.entries.items():
            v = float(v)
            if not v >= 0:
                raise ValueError(f"edge price on {e} must be non-negative, got {v}")
            clean[edge_key(*e)] = v
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(clean.items()))))

    def __getitem__(self, edge: Edge) -> float:
        return self.entries[edge_key(*edge)]

    def items(self):
        return self.entries.items()


@dataclass(frozen=True)
class PricingScheme:
    """Symmetric OD ticket prices keyed by canonical (sorted) station pairs."""

    entries: Mapping[Tuple[str, str], float]
    provenance: str = "legacy"

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        clean: dict = {}
        for (a, b), v in self.entries.items():
            v = float(v)
            if a == b:
                raise ValueError(f"ticket price for identical endpoints {a!r}")
            if not (v >= 0 and v < float("inf")):
                raise ValueError(f"price for {(a, b)} must be finite and non-negative, got {v}")
            key = edge_key(a, b)
            if key in clean and clean[key] != v:
                raise ValueError(f"asymmetric prices for {key}")
            clean[key] = v
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(clean.items()))))

    def __getitem__(self, od) -> float:
        return self.entries[edge_key(*od)]

    def get(self, od, default=None):
        return self.entries.get(edge_key(*od), default)

    def __contains__(self, od) -> bool:
        return edge_key(*od) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return self.entries.items()

    def with_provenance(self, provenance: str) -> "PricingScheme":
        return PricingScheme(self.entries, provenance)


def edge_inspection_prob(plan: MonitoringPlan, flows: EdgeFlows, edge: Edge) -> float:
    sigma = flows.get(edge)
    if not sigma > 0:
        raise ZeroDivisionError(f"no passenger flow on edge {edge_key(*edge)}")
    q = float(plan.technology(plan[edge])) / sigma
    if q > 1:
        log.info("expected inspection count %.4f on %s exceeds one", q, edge_key(*edge))
    return q


def ic_edge_prices(plan: MonitoringPlan, flows: EdgeFlows, alpha: float) -> EdgePriceTable:
    alpha = check_alpha(alpha)
    return EdgePriceTable({e: alpha * edge_inspection_prob(plan, flows, e) for e in plan.entries})


def calibrate_alpha(
    target_revenue: float,
    plan: MonitoringPlan,
    flows: Optional[EdgeFlows] = None,
    solve: bool = False,
) -> float:
    """Fine level at which full IC compliance yields ``target_revenue``.

    With phi = identity this is ``target / lambda_total``. Other technologies
    need ``solve=True`` and the flows, and are solved by bracketing the IC
    revenue (monotone in alpha).
    """
    if target_revenue < 0:
        raise ValueError("target revenue must be non-negative")
    total = plan.total
    if not total > 0:
        raise ValueError("zero inspector mass")
    if plan.technology.is_identity:
        return target_revenue / total
    if not solve:
        raise ValueError("closed-form calibration needs phi = identity; pass solve=True for other technologies")
    if flows is None:
        raise ValueError("solving for alpha needs edge flows")
    if target_revenue == 0:
        return 0.0

    def excess(alpha):
        prices = ic_edge_prices(plan, flows, alpha)
        return sum(p * flows[e] for e, p in prices.items()) - target_revenue

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
    return brentq(excess, 0.0, hi, xtol=1e-12, rtol=1e-14)


def inspector_mass_from_staffing(
    inspectors: float = 30,
    period_minutes: float = 360,
    minutes_per_station: float = 2.69,
    edges: int = 88,
    round_steps: bool = True,
) -> float:
    """Total inspector mass over one period from staffing assumptions.

    Each inspector passes ``period_minutes / minutes_per_station`` stations,
    i.e. that many divided by ``edges`` visits per edge. With ``round_steps``
    the intermediate figures are rounded the way they are usually quoted
    (whole stations, visits and per-edge mass to two decimals), which gives
    4013 for the defaults.
    """
    stations = period_minutes / minutes_per_station
    if round_steps:
        stations = round(stations)
    visits = stations / edges
    if round_steps:
        visits = round(visits, 2)
    per_edge = inspectors * visits
    if round_steps:
        per_edge = round(per_edge, 2)
    total = per_edge * edges
    return float(round(total)) if round_steps else total


def uniform_plan(net: TransitNetwork, lam_total: float, technology: Optional[MonitoringTechnology] = None) -> MonitoringPlan:
    if not lam_total > 0:
        raise ValueError("total inspector mass must be positive")
    edges = net.edge_set
    if not edges:
        raise ValueError("network has no edges")
    each = lam_total / len(edges)
    return MonitoringPlan({e: each for e in edges}, technology or MonitoringTechnology.identity(), "uniform")


def proportional_plan(
    net: TransitNetwork, flows: EdgeFlows, lam_total: float, technology: Optional[MonitoringTechnology] = None
) -> MonitoringPlan:
    if not lam_total > 0:
        raise ValueError("total inspector mass must be positive")
    zero = [e for e in net.edge_set if not flows.get(e) > 0]
    if zero:
        raise ZeroDivisionError(f"zero flow on edge(s) {zero[:3]}")
    sigma_total = sum(flows[e] for e in net.edge_set)
    plan = {e: lam_total * flows[e] / sigma_total for e in net.edge_set}
    return MonitoringPlan(plan, technology or MonitoringTechnology.identity(), "proportional")


def od_ic_prices(net: TransitNetwork, edge_prices: EdgePriceTable, provenance: str = "ic") -> PricingScheme:
    """OD price = cheapest path sum of edge prices."""
    net.require_valid()
    missing = set(net.edge_set) - set(edge_prices.entries)
    if missing:
        raise ValueError(f"edge prices missing for {sorted(missing)[:3]}")
    table = edge_prices.entries
    out = {}
    for o in sorted(net.station_set):
        for d, path in shortest_paths_from(net, o, table).items():
            if d > o:
                out[(o, d)] = sum(table[e] for e in path_edges(path))
    return PricingScheme(out, provenance)


def naive_cap(legacy: PricingScheme, ic: PricingScheme) -> PricingScheme:
    """Pairwise minimum of legacy and IC prices; pairs without a legacy price keep the IC price."""
    out = {}
    for od, p in ic.items():
        cap = legacy.get(od)
        out[od] = p if cap is None else min(cap, p)
    return PricingScheme(out, "capped-ic")


@dataclass
class AdjustmentTrace:
    iterations: int = 0
    changed: list = field(default_factory=list)  # pairs lowered per iteration
    max_residual: list = field(default_factory=list)


def cap_and_adjust(
    legacy: PricingScheme,
    edge_prices: EdgePriceTable,
    net: TransitNetwork,
    alpha: float = None,
    plan: Optional[MonitoringPlan] = None,
    flows: Optional[EdgeFlows] = None,
    max_iterations: int = 100,
    tolerance: float = 1e-9,
    model: str = "multi",
    trace: Optional[AdjustmentTrace] = None,
) -> PricingScheme:
    """Lower ``min(legacy, IC)`` until no OD pair has a cheaper deviation.

    Each round prices every OD pair at the cost of its best strategy against
    the current scheme, simultaneously for all pairs, and stops once no price
    moves by more than ``tolerance``. Evasion costs are the IC edge prices
    (``alpha * Q``); ``alpha``/``plan``/``flows`` are only used to cross-check
    them when supplied.
    """
    from popfare.strategy import best_responses_from, evasion_costs

    if plan is not None and flows is not None and alpha is not None:
        check = ic_edge_prices(plan, flows, alpha)
        for e, p in check.items():
            if abs(p - edge_prices[e]) > 1e-9 * max(1.0, p):
                raise ValueError(f"edge prices disagree with alpha*Q on {e}")
    ic = od_ic_prices(net, edge_prices)
    current = dict(naive_cap(legacy, ic).entries)
    evade = evasion_costs(edge_prices)
    for it in range(1, max_iterations + 1):
        scheme = PricingScheme(current, "capped-ic")
        updates = {}
        for o in sorted(net.station_set):
            for d, (_, cost) in best_responses_from(net, o, scheme, evade, model).items():
                if d > o and cost.total < current[(o, d)] - tolerance:
                    updates[(o, d)] = cost.total
        residual = max((current[od] - v for od, v in updates.items()), default=0.0)
        if trace is not None:
            trace.iterations = it
            trace.changed.append(len(updates))
            trace.max_residual.append(residual)
        if not updates:
            return scheme
        current.update(updates)
    raise ConvergenceError("capped-IC adjustment did not reach a fixed point", residual, max_iterations)
