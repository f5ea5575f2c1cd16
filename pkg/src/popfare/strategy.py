"""Strategic passengers: strategy costs, best responses and IC audits.

A strategy is a simple path plus a set of tickets covering non-overlapping
stretches of it. Uncovered edges cost ``alpha * Q`` each (the IC edge price).

The best response is a shortest path on an augmented graph whose arcs are
evasion arcs (one per network edge) and ticket arcs (one per priced pair).
In ``"single"`` mode a second layer allows at most one ticket. The walk found
this way is a lower bound over all simple-path strategies; when its ticket
arcs cannot be laid out as a simple path an exact branch-and-bound search
over simple paths takes over.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import networkx as nx

from popfare.errors import InstanceTooLarge
from popfare.network import DemandMatrix, Edge, EdgeFlows, TransitNetwork, edge_key, path_edges, shortest_paths_from
from popfare.pricing import EdgePriceTable, MonitoringPlan, PricingScheme, ic_edge_prices

MODELS = ("multi", "single")
TIE_TOL = 1e-9

_INF = (math.inf, math.inf)


@dataclass(frozen=True)
class CostBreakdown:
    outlay: float
    exposure: float

    @property
    def total(self) -> float:
        return self.outlay + self.exposure

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(self.outlay + other.outlay, self.exposure + other.exposure)


@dataclass(frozen=True)
class PassengerStrategy:
    """``tickets`` are (start, end) pairs oriented along ``path``."""

    path: Tuple[str, ...]
    tickets: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        path = tuple(self.path)
        if len(path) < 2:
            raise ValueError("a strategy path needs at least two stations")
        if len(set(path)) != len(path):
            raise ValueError(f"path {path} repeats a station")
        pos = {s: i for i, s in enumerate(path)}
        spans = []
        for a, b in self.tickets:
            if a not in pos or b not in pos:
                raise ValueError(f"ticket {(a, b)} has an endpoint off the path")
            i, j = pos[a], pos[b]
            if i >= j:
                raise ValueError(f"ticket {(a, b)} runs against the path order")
            spans.append((i, j))
        spans.sort()
        for (i0, j0), (i1, j1) in zip(spans, spans[1:]):
            if i1 < j0:
                raise ValueError("tickets cover overlapping stretches")
        object.__setattr__(self, "path", path)
        object.__setattr__(self, "tickets", tuple((path[i], path[j]) for i, j in spans))

    @property
    def origin(self) -> str:
        return self.path[0]

    @property
    def dest(self) -> str:
        return self.path[-1]

    def spans(self) -> list[Tuple[int, int]]:
        pos = {s: i for i, s in enumerate(self.path)}
        return [(pos[a], pos[b]) for a, b in self.tickets]

    def covered_edges(self) -> set:
        covered = set()
        for i, j in self.spans():
            covered.update(path_edges(self.path[i : j + 1]))
        return covered

    def uncovered_edges(self) -> list[Edge]:
        covered = self.covered_edges()
        return [e for e in path_edges(self.path) if e not in covered]

    @property
    def is_full_ticket(self) -> bool:
        return self.tickets == ((self.origin, self.dest),)

    def coverage(self) -> str:
        """``"full"``, ``"partial"`` or ``"none"`` by edges covered."""
        if not self.tickets:
            return "none"
        return "partial" if self.uncovered_edges() else "full"


def evasion_costs(edge_prices: EdgePriceTable) -> Mapping[Edge, float]:
    return dict(edge_prices.entries)


def _evade_from(plan: MonitoringPlan, flows: EdgeFlows, alpha: float) -> Mapping[Edge, float]:
    return evasion_costs(ic_edge_prices(plan, flows, alpha))


def _cost(s: PassengerStrategy, prices: PricingScheme, evade: Mapping[Edge, float]) -> CostBreakdown:
    outlay = 0.0
    for a, b in s.tickets:
        p = prices.get((a, b))
        if p is None:
            raise KeyError(f"no price for ticket {(a, b)}")
        outlay += p
    exposure = 0.0
    for e in s.uncovered_edges():
        if e not in evade:
            raise KeyError(f"path uses {e}, which is not a network edge")
        exposure += evade[e]
    return CostBreakdown(outlay, exposure)


def strategy_cost(
    s: PassengerStrategy, prices: PricingScheme, plan: MonitoringPlan, flows: EdgeFlows, alpha: float
) -> CostBreakdown:
    return _cost(s, prices, _evade_from(plan, flows, alpha))


def _check_model(model: str) -> str:
    if model not in MODELS:
        raise ValueError(f"deviation model must be one of {MODELS}, got {model!r}")
    return model


class StrategyOracle:
    """Best responses for one (network, prices, evasion costs) snapshot."""

    def __init__(
        self,
        net: TransitNetwork,
        prices: PricingScheme,
        evade: Mapping[Edge, float],
        model: str = "multi",
        tie_tol: float = TIE_TOL,
    ):
        net.require_valid()
        self.net = net
        self.prices = prices
        self.evade = dict(evade)
        self.model = _check_model(model)
        self.tie_tol = tie_tol
        missing = [e for e in net.edge_set if e not in self.evade]
        if missing:
            raise KeyError(f"no evasion cost for edge(s) {missing[:3]}")
        self.ev_arcs = {
            u: tuple((v, self.evade[edge_key(u, v)]) for v in nbrs) for u, nbrs in net.adjacency.items()
        }
        tickets: dict = {s: [] for s in net.station_set}
        for (a, b), p in prices.items():
            if a in tickets and b in tickets:
                tickets[a].append((b, p))
                tickets[b].append((a, p))
        self.ticket_arcs = {s: tuple(sorted(v)) for s, v in tickets.items()}

    # -- augmented-graph search ---------------------------------------------

    def _dijkstra(self, source: str, model: Optional[str] = None):
        """Labels (cost, exposure) and predecessor arcs for every state.

        States are ``(station, layer)``; layer 1 means the single ticket is spent.
        """
        single = (model or self.model) == "single"
        start = (source, 0)
        best = {start: (0.0, 0.0)}
        pred: dict = {}
        heap = [(0.0, 0.0, start)]
        done = set()
        while heap:
            c, x, state = heapq.heappop(heap)
            if state in done:
                continue
            done.add(state)
            u, layer = state
            for v, w in self.ev_arcs[u]:
                nxt = (v, layer)
                lab = (c + w, x + w)
                if lab < best.get(nxt, _INF):
                    best[nxt] = lab
                    pred[nxt] = (state, "evade")
                    heapq.heappush(heap, (lab[0], lab[1], nxt))
            if single and layer == 1:
                continue
            to_layer = 1 if single else 0
            for v, p in self.ticket_arcs[u]:
                nxt = (v, to_layer)
                lab = (c + p, x)
                if lab < best.get(nxt, _INF):
                    best[nxt] = lab
                    pred[nxt] = (state, "ticket")
                    heapq.heappush(heap, (lab[0], lab[1], nxt))
        return best, pred

    def _walk(self, dest: str, best, pred) -> list:
        states = [s for s in ((dest, 0), (dest, 1)) if s in best]
        state = min(states, key=lambda s: best[s])
        arcs = []
        while state in pred:
            prev, kind = pred[state]
            arcs.append((kind, prev[0], state[0]))
            state = prev
        arcs.reverse()
        return arcs

    def _route(self, a: str, b: str, blocked: set) -> Optional[Tuple[str, ...]]:
        """Hop-shortest, lexicographically smallest a-b path avoiding ``blocked``."""
        parent = {a: None}
        queue = deque([a])
        adj = self.net.adjacency
        while queue:
            u = queue.popleft()
            if u == b:
                break
            for v in adj[u]:
                if v not in parent and (v == b or v not in blocked):
                    parent[v] = u
                    queue.append(v)
        if b not in parent:
            return None
        out = [b]
        while out[-1] != a:
            out.append(parent[out[-1]])
        return tuple(reversed(out))

    def _expand(self, origin: str, arcs: list) -> Optional[PassengerStrategy]:
        anchors = {origin}
        for _, u, v in arcs:
            anchors.update((u, v))
        used = set(anchors)
        path = [origin]
        tickets = []
        for kind, u, v in arcs:
            if kind == "evade":
                path.append(v)
                continue
            route = self._route(u, v, used - {u, v})
            if route is None:
                return None
            used.update(route)
            path.extend(route[1:])
            tickets.append((u, v))
        if len(set(path)) != len(path):
            return None
        return PassengerStrategy(tuple(path), tuple(tickets))

    # -- exact search over simple paths ------------------------------------

    def _exact(self, origin: str, dest: str, model: str):
        single = model == "single"
        lb_best, _ = self._dijkstra(dest, model)
        h = {}
        h_evade = {}
        for (s, layer), lab in lb_best.items():
            h[s] = min(h.get(s, math.inf), lab[0])
            if layer == 0 and single:
                h_evade[s] = lab[0]
        if not single:
            h_evade = h
        price = self.prices.get
        adj = self.net.adjacency

        incumbent = [_INF, None]
        evade_path = shortest_paths_from(self.net, origin, self.evade)[dest]
        cand = PassengerStrategy(evade_path)
        incumbent[:] = [self._label(cand), cand]
        if price((origin, dest)) is not None:
            full = self._full_ticket(origin, dest)
            lab = self._label(full)
            if lab <= incumbent[0]:
                incumbent[:] = [lab, full]

        path = [origin]
        on_path = {origin}
        # f0: nothing open, no ticket used yet (single) / anything (multi)
        # f1: single mode only, ticket spent
        f0 = [(0.0, 0.0)]
        f1 = [_INF]
        back0 = [None]
        back1 = [None]

        def lower_bound() -> float:
            lb = math.inf
            for k in range(len(path)):
                lb = min(lb, f0[k][0] + h.get(path[k], math.inf))
            if single:
                lb = min(lb, f1[-1][0] + h_evade.get(path[-1], math.inf))
            return lb

        def record():
            i = len(path) - 1
            lab0, lab1 = f0[i], f1[i]
            if single and lab1 < lab0:
                lab, layer = lab1, 1
            else:
                lab, layer = lab0, 0
            if lab < incumbent[0]:
                incumbent[:] = [lab, self._rebuild(path, back0, back1, layer)]

        def dfs():
            if path[-1] == dest:
                record()
                return
            if (lower_bound(), 0.0) >= incumbent[0]:
                return
            u = path[-1]
            i = len(path) - 1
            order = sorted((v for v in adj[u] if v not in on_path), key=lambda v: (h.get(v, math.inf), v))
            for v in order:
                w = self.evade[edge_key(u, v)]
                n0 = (f0[i][0] + w, f0[i][1] + w)
                b0 = (i, "evade")
                n1 = (f1[i][0] + w, f1[i][1] + w)
                b1 = (i, "evade", 1)
                for k in range(i + 1):
                    p = price((path[k], v))
                    if p is None:
                        continue
                    lab = (f0[k][0] + p, f0[k][1])
                    if single:
                        if lab < n1:
                            n1, b1 = lab, (k, "ticket", 0)
                    elif lab < n0:
                        n0, b0 = lab, (k, "ticket")
                path.append(v)
                on_path.add(v)
                f0.append(n0)
                f1.append(n1)
                back0.append(b0)
                back1.append(b1)
                dfs()
                path.pop()
                on_path.discard(v)
                f0.pop()
                f1.pop()
                back0.pop()
                back1.pop()

        dfs()
        return incumbent[1]

    @staticmethod
    def _rebuild(path, back0, back1, layer) -> PassengerStrategy:
        tickets = []
        j = len(path) - 1
        while j > 0:
            b = back1[j] if layer == 1 else back0[j]
            k, kind = b[0], b[1]
            if kind == "ticket":
                tickets.append((path[k], path[j]))
                layer = 0
            j = k
        return PassengerStrategy(tuple(path), tuple(reversed(tickets)))

    def _label(self, s: PassengerStrategy) -> Tuple[float, float]:
        c = _cost(s, self.prices, self.evade)
        return (c.total, c.exposure)

    def _full_ticket(self, origin: str, dest: str) -> PassengerStrategy:
        path = shortest_paths_from(self.net, origin)[dest]
        return PassengerStrategy(path, ((origin, dest),))

    # -- public -------------------------------------------------------------

    def from_origin(self, origin: str, model: Optional[str] = None) -> dict:
        """Best response (strategy, cost) to every other station."""
        model = _check_model(model or self.model)
        best, pred = self._dijkstra(origin, model)
        out = {}
        for dest in sorted(self.net.station_set):
            if dest == origin:
                continue
            s = self._expand(origin, self._walk(dest, best, pred))
            if s is None:
                s = self._exact(origin, dest, model)
            out[dest] = self._finish(origin, dest, s)
        return out

    def best(self, origin: str, dest: str, model: Optional[str] = None):
        model = _check_model(model or self.model)
        if origin == dest:
            raise ValueError("origin equals destination")
        best, pred = self._dijkstra(origin, model)
        if (dest, 0) not in best and (dest, 1) not in best:
            raise ValueError(f"{dest} unreachable from {origin}")
        s = self._expand(origin, self._walk(dest, best, pred))
        if s is None:
            s = self._exact(origin, dest, model)
        return self._finish(origin, dest, s)

    def _finish(self, origin, dest, s):
        cost = _cost(s, self.prices, self.evade)
        full = self.prices.get((origin, dest))
        if full is not None and not s.is_full_ticket and full <= cost.total + self.tie_tol:
            s = self._full_ticket(origin, dest)
            cost = _cost(s, self.prices, self.evade)
        return s, cost


def best_responses_from(
    net: TransitNetwork, origin: str, prices: PricingScheme, evade: Mapping[Edge, float], model: str = "multi"
) -> dict:
    return StrategyOracle(net, prices, evade, model).from_origin(origin)


def best_response(
    net: TransitNetwork,
    origin: str,
    dest: str,
    prices: PricingScheme,
    plan: MonitoringPlan,
    flows: EdgeFlows,
    alpha: float,
    model: str = "multi",
) -> Tuple[PassengerStrategy, CostBreakdown]:
    return StrategyOracle(net, prices, _evade_from(plan, flows, alpha), model).best(origin, dest)


def _segmentations(n_edges: int, priced) -> Iterable[list]:
    """Every way to cover positions 0..n_edges with evaded edges and ticket spans."""

    def rec(pos):
        if pos == n_edges:
            yield []
            return
        for rest in rec(pos + 1):
            yield [("evade", pos, pos + 1)] + rest
        for j in range(pos + 1, n_edges + 1):
            if priced(pos, j):
                for rest in rec(j):
                    yield [("ticket", pos, j)] + rest

    yield from rec(0)


def brute_force_best_response(
    net: TransitNetwork,
    origin: str,
    dest: str,
    prices: PricingScheme,
    plan: MonitoringPlan,
    flows: EdgeFlows,
    alpha: float,
    max_tickets: Optional[int] = None,
    max_stations: int = 12,
    max_paths: int = 20,
) -> Tuple[PassengerStrategy, CostBreakdown]:
    """Exhaustive search over all simple paths and ticket layouts (test oracle)."""
    evade = _evade_from(plan, flows, alpha)
    g = nx.Graph()
    g.add_nodes_from(net.station_set)
    g.add_edges_from(net.edge_set)
    paths = nx.all_simple_paths(g, origin, dest)
    if net.n_stations > max_stations:
        paths = list(itertools.islice(paths, max_paths + 1))
        if len(paths) > max_paths:
            raise InstanceTooLarge(f"more than {max_paths} simple paths between {origin} and {dest}")
    best_key, best = None, None
    for path in paths:
        path = tuple(path)
        edges = path_edges(path)
        for layout in _segmentations(len(edges), lambda i, j, p=path: (p[i], p[j]) in prices):
            tickets = [(path[i], path[j]) for kind, i, j in layout if kind == "ticket"]
            if max_tickets is not None and len(tickets) > max_tickets:
                continue
            outlay = sum(prices[t] for t in tickets)
            exposure = sum(evade[edges[i]] for kind, i, _ in layout if kind == "evade")
            key = (outlay + exposure, exposure)
            if best_key is None or key < best_key:
                best_key, best = key, (path, tickets)
    s = PassengerStrategy(best[0], tuple(best[1]))
    return s, _cost(s, prices, evade)


@dataclass(frozen=True)
class ICViolation:
    od: Tuple[str, str]
    full_price: Optional[float]
    witness: PassengerStrategy
    witness_cost: CostBreakdown

    @property
    def gap(self) -> float:
        return math.inf if self.full_price is None else self.full_price - self.witness_cost.total


def check_incentive_compatibility(
    prices: PricingScheme,
    plan: MonitoringPlan,
    flows: EdgeFlows,
    net: TransitNetwork,
    alpha: float,
    model: str = "multi",
    demand: Optional[DemandMatrix] = None,
    tol: float = TIE_TOL,
) -> list[ICViolation]:
    """OD pairs whose best response is strictly cheaper than the full ticket.

    With ``demand`` only pairs with positive demand (either direction) are audited.
    """
    oracle = StrategyOracle(net, prices, _evade_from(plan, flows, alpha), model, tie_tol=tol)
    wanted = None
    if demand is not None:
        wanted = {edge_key(*od) for od, _ in demand.positive()}
    out = []
    for o in sorted(net.station_set):
        targets = [d for d in sorted(net.station_set) if d > o and (wanted is None or (o, d) in wanted)]
        if not targets:
            continue
        responses = oracle.from_origin(o)
        for d in targets:
            s, cost = responses[d]
            full = prices.get((o, d))
            if full is None or cost.total < full - tol:
                out.append(ICViolation((o, d), full, s, cost))
    return out
