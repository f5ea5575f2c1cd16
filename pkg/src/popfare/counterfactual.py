"""Scenario engine: full-compliance revenue, price summaries and evasion
counterfactuals with strategic passengers."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

from popfare.errors import PopfareError
from popfare.network import DemandMatrix, TransitNetwork, assign_flows, total_traffic
from popfare.pricing import (
    AdjustmentTrace,
    MonitoringPlan,
    PricingScheme,
    calibrate_alpha,
    cap_and_adjust,
    check_alpha,
    ic_edge_prices,
    od_ic_prices,
    proportional_plan,
    uniform_plan,
)
from popfare.strategy import MODELS, StrategyOracle, evasion_costs
from popfare.technology import MonitoringTechnology

log = logging.getLogger(__name__)

MONITORING = ("uniform", "proportional", "explicit")
PRICING = ("legacy", "ic", "capped-ic")
DEFAULT_LAMBDA_TOTAL = 4013.0


class InconsistentScenario(PopfareError):
    exit_code = 4


@dataclass(frozen=True)
class ScenarioConfig:
    period: str
    monitoring: str = "uniform"
    pricing: str = "legacy"
    model: str = "multi"
    alpha: Optional[float] = None  # None: calibrate to legacy full-compliance revenue
    lam_total: float = DEFAULT_LAMBDA_TOTAL
    technology: str = "identity"
    tie_tol: float = 1e-9
    adjust_tol: float = 1e-9
    max_iterations: int = 100
    plan: Optional[MonitoringPlan] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.monitoring not in MONITORING:
            raise ValueError(f"monitoring must be one of {MONITORING}")
        if self.pricing not in PRICING:
            raise ValueError(f"pricing must be one of {PRICING}")
        if self.model not in MODELS:
            raise ValueError(f"deviation model must be one of {MODELS}")
        if not self.lam_total > 0:
            raise ValueError("lam_total must be positive")
        if self.monitoring == "explicit" and self.plan is None:
            raise ValueError("explicit monitoring needs a plan")
        if self.alpha is not None:
            check_alpha(self.alpha)
        MonitoringTechnology.parse(self.technology)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("plan")
        return d


@dataclass
class SimulationReport:
    period: str
    monitoring: str
    pricing: str
    model: str
    alpha: float
    lam_total: float
    trips: float
    trips_full: float
    trips_partial: float
    trips_unpaid: float
    revenue: float
    full_compliance_revenue: float
    baseline_revenue: float  # legacy prices, full compliance
    partial_loss: float
    no_ticket_loss: float
    adjust_iterations: int = 0

    @property
    def share_full(self) -> float:
        return self.trips_full / self.trips if self.trips else 0.0

    @property
    def share_partial(self) -> float:
        return self.trips_partial / self.trips if self.trips else 0.0

    @property
    def share_unpaid(self) -> float:
        return self.trips_unpaid / self.trips if self.trips else 0.0

    @property
    def loss_pct(self) -> float:
        if not self.baseline_revenue:
            return 0.0
        return (self.baseline_revenue - self.revenue) / self.baseline_revenue


@dataclass(frozen=True)
class LossDecomposition:
    partial: float
    no_ticket: float
    percentage: float

    @property
    def total(self) -> float:
        return self.partial + self.no_ticket


@dataclass(frozen=True)
class PriceSummary:
    minimum: float
    median: float
    maximum: float
    share_below: float  # unweighted share of pairs where scheme < reference
    share_below_weighted: Optional[float]  # demand-weighted, if demand given


def revenue_full_compliance(demand: DemandMatrix, prices: PricingScheme) -> float:
    total = 0.0
    for od, v in demand.positive():
        p = prices.get(od)
        if p is None:
            raise KeyError(f"no price for demanded pair {od}")
        total += v * p
    return total


def lower_median(values) -> float:
    ordered = sorted(values)
    if not ordered:
        raise ValueError("median of an empty price list")
    return ordered[(len(ordered) - 1) // 2]


def summarize_prices(
    scheme: PricingScheme, legacy: PricingScheme, demand: Optional[DemandMatrix] = None
) -> PriceSummary:
    prices = [p for _, p in scheme.items()]
    pairs = [od for od, _ in scheme.items() if od in legacy]
    below = [od for od in pairs if scheme[od] < legacy[od]]
    share = len(below) / len(pairs) if pairs else 0.0
    weighted = None
    if demand is not None:
        w = {od: demand[od] + demand[(od[1], od[0])] for od in pairs}
        tot = sum(w.values())
        weighted = sum(w[od] for od in below) / tot if tot else 0.0
    return PriceSummary(min(prices), lower_median(prices), max(prices), share, weighted)


def loss_decomposition(report: SimulationReport) -> LossDecomposition:
    return LossDecomposition(report.partial_loss, report.no_ticket_loss, report.loss_pct)


def build_plan(cfg: ScenarioConfig, net: TransitNetwork, flows) -> MonitoringPlan:
    tech = MonitoringTechnology.parse(cfg.technology)
    if cfg.monitoring == "uniform":
        return uniform_plan(net, cfg.lam_total, tech)
    if cfg.monitoring == "proportional":
        return proportional_plan(net, flows, cfg.lam_total, tech)
    cfg.plan.check_covers(net)
    return cfg.plan


@dataclass
class ScenarioState:
    """Intermediate objects of one scenario run, for callers that export them."""

    flows: object
    plan: MonitoringPlan
    alpha: float
    edge_prices: object
    scheme: PricingScheme
    responses: dict = field(default_factory=dict)


def prepare_scenario(cfg: ScenarioConfig, net: TransitNetwork, demand: DemandMatrix, legacy: PricingScheme):
    flows = assign_flows(net, demand)
    plan = build_plan(cfg, net, flows)
    baseline = revenue_full_compliance(demand, legacy)
    if cfg.alpha is None:
        alpha = calibrate_alpha(baseline, plan, flows, solve=not plan.technology.is_identity)
    else:
        alpha = cfg.alpha
    edge_prices = ic_edge_prices(plan, flows, alpha)
    trace = AdjustmentTrace()
    if cfg.pricing == "legacy":
        scheme = legacy
    elif cfg.pricing == "ic":
        tag = "ic-uniform" if cfg.monitoring == "uniform" else "ic-proportional" if cfg.monitoring == "proportional" else "ic"
        scheme = od_ic_prices(net, edge_prices, tag)
    else:
        scheme = cap_and_adjust(
            legacy, edge_prices, net, alpha, plan, flows, cfg.max_iterations, cfg.adjust_tol, cfg.model, trace
        )
    return ScenarioState(flows, plan, alpha, edge_prices, scheme), baseline, trace


def run_scenario(
    cfg: ScenarioConfig, net: TransitNetwork, demand: DemandMatrix, legacy: PricingScheme, state_out: Optional[list] = None
) -> SimulationReport:
    """Every OD pair's whole demand follows its single best response.

    Inspection probabilities come from the hop-count loading of ``demand``
    and are not updated for evasion-induced rerouting.
    """
    state, baseline, trace = prepare_scenario(cfg, net, demand, legacy)
    scheme = state.scheme
    oracle = StrategyOracle(net, scheme, evasion_costs(state.edge_prices), cfg.model, tie_tol=cfg.tie_tol)
    by_origin: dict = {}
    for od, _ in demand.positive():
        by_origin.setdefault(od[0], []).append(od[1])
    full_paid = partial = unpaid = 0.0
    revenue = full_rev = partial_loss = none_loss = 0.0
    for o in sorted(by_origin):
        responses = oracle.from_origin(o)
        for d in by_origin[o]:
            v = demand[(o, d)]
            price = scheme.get((o, d))
            if price is None:
                raise KeyError(f"no price for demanded pair {(o, d)}")
            s, cost = responses[d]
            state.responses[(o, d)] = (s, cost)
            kind = s.coverage()
            full_rev += v * price
            revenue += v * cost.outlay
            if kind == "none":
                unpaid += v
                none_loss += v * price
            else:
                if kind == "full":
                    full_paid += v
                else:
                    partial += v
                partial_loss += v * (price - cost.outlay)
            if cfg.pricing == "ic" and not s.is_full_ticket:
                raise InconsistentScenario(f"IC scheme is not incentive compatible for {(o, d)}")
    if state_out is not None:
        state_out.append(state)
    return SimulationReport(
        period=cfg.period,
        monitoring=cfg.monitoring,
        pricing=cfg.pricing,
        model=cfg.model,
        alpha=state.alpha,
        lam_total=state.plan.total,
        trips=total_traffic(demand),
        trips_full=full_paid,
        trips_partial=partial,
        trips_unpaid=unpaid,
        revenue=revenue,
        full_compliance_revenue=full_rev,
        baseline_revenue=baseline,
        partial_loss=partial_loss,
        no_ticket_loss=none_loss,
        adjust_iterations=trace.iterations,
    )
