"""Station graph, OD demand, deterministic shortest paths and flow loading."""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence, Tuple, Union

from popfare.errors import NetworkValidationError

StationId = str
Edge = Tuple[str, str]
ODPair = Tuple[str, str]
Path = Tuple[str, ...]

EdgeCost = Union[Mapping[Edge, float], Callable[[Edge], float], None]

DEFAULT_PERIODS = ("AM-peak", "Midday", "PM-peak", "Evening")


def edge_key(a: str, b: str) -> Edge:
    """Canonical (sorted) key for the undirected edge between ``a`` and ``b``."""
    return (a, b) if a <= b else (b, a)


def path_edges(path: Sequence[str]) -> list[Edge]:
    return [edge_key(path[i], path[i + 1]) for i in range(len(path) - 1)]


@dataclass(frozen=True)
class Violation:
    kind: str  # "duplicate-station" | "self-loop" | "duplicate-edge" | "unknown-station" | "disconnected" | "empty-id"
    detail: Tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.kind}: {', '.join(self.detail)}"


@dataclass(frozen=True, eq=False)
class TransitNetwork:
    """Undirected station graph.

    Construction keeps the raw inputs so that ``validate_network`` can report
    every problem at once; routing functions call :meth:`require_valid`.
    """

    stations: Tuple[str, ...]
    edges: Tuple[Edge, ...]

    @classmethod
    def from_edges(cls, edges: Iterable[Sequence[str]], stations: Optional[Iterable[str]] = None) -> "TransitNetwork":
        edge_list = tuple((str(a), str(b)) for a, b in edges)
        if stations is None:
            seen: dict[str, None] = {}
            for a, b in edge_list:
                seen.setdefault(a)
                seen.setdefault(b)
            stations = seen
        return cls(tuple(str(s) for s in stations), edge_list)

    @cached_property
    def station_set(self) -> frozenset:
        return frozenset(self.stations)

    @cached_property
    def edge_set(self) -> Tuple[Edge, ...]:
        """Canonical, de-duplicated, sorted edges."""
        return tuple(sorted({edge_key(a, b) for a, b in self.edges if a != b}))

    @cached_property
    def adjacency(self) -> Mapping[str, Tuple[str, ...]]:
        adj: dict[str, set] = {s: set() for s in self.stations}
        for a, b in self.edge_set:
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        return MappingProxyType({s: tuple(sorted(n)) for s, n in adj.items()})

    @property
    def n_stations(self) -> int:
        return len(self.station_set)

    def has_edge(self, a: str, b: str) -> bool:
        return b in self.adjacency.get(a, ())

    def require_valid(self) -> None:
        problems = validate_network(self)
        if problems:
            raise NetworkValidationError(problems)

    def od_pairs(self) -> Iterator[ODPair]:
        """Every ordered pair of distinct stations, in sorted order."""
        ordered = sorted(self.station_set)
        for x in ordered:
            for y in ordered:
                if x != y:
                    yield (x, y)


def validate_network(net: TransitNetwork) -> list[Violation]:
    """Return all invariant violations; an empty list means the network is valid."""
    problems: list[Violation] = []
    counts: dict[str, int] = defaultdict(int)
    for s in net.stations:
        counts[s] += 1
        if not s:
            problems.append(Violation("empty-id", (repr(s),)))
    for s, c in counts.items():
        if c > 1:
            problems.append(Violation("duplicate-station", (s,)))

    seen_edges: set = set()
    for a, b in net.edges:
        if a == b:
            problems.append(Violation("self-loop", (a, b)))
            continue
        for s in (a, b):
            if s not in counts:
                problems.append(Violation("unknown-station", (s, f"{a}-{b}")))
        key = edge_key(a, b)
        if key in seen_edges:
            problems.append(Violation("duplicate-edge", key))
        seen_edges.add(key)

    if counts:
        start = next(iter(sorted(counts)))
        reached = {start}
        stack = [start]
        adj = net.adjacency
        while stack:
            for nb in adj.get(stack.pop(), ()):
                if nb not in reached and nb in counts:
                    reached.add(nb)
                    stack.append(nb)
        missing = sorted(set(counts) - reached)
        if missing:
            problems.append(Violation("disconnected", tuple(missing)))
    return problems


def _cost_fn(edge_cost: EdgeCost) -> Callable[[Edge], float]:
    if edge_cost is None:
        return lambda e: 1
    if callable(edge_cost):
        return edge_cost
    table = edge_cost
    return lambda e: table[e]


def shortest_paths_from(net: TransitNetwork, origin: str, edge_cost: EdgeCost = None) -> dict[str, Path]:
    """Minimum-cost simple paths from ``origin`` to every reachable station.

    Among equal-cost paths the lexicographically smallest station sequence wins.
    Costs must be non-negative; the default is one per edge (hop count).
    """
    if origin not in net.station_set:
        raise KeyError(f"unknown station {origin!r}")
    cost = _cost_fn(edge_cost)
    adj = net.adjacency
    heap: list = [(0, (origin,))]
    done: dict[str, Path] = {}
    while heap:
        c, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done[node] = path
        for nb in adj[node]:
            if nb in done:
                continue
            w = cost(edge_key(node, nb))
            if w < 0:
                raise ValueError(f"negative edge cost on {edge_key(node, nb)}")
            heapq.heappush(heap, (c + w, path + (nb,)))
    return done


def shortest_path(net: TransitNetwork, origin: str, dest: str, edge_cost: EdgeCost = None) -> Path:
    if dest not in net.station_set:
        raise KeyError(f"unknown station {dest!r}")
    if origin == dest:
        raise ValueError("origin equals destination")
    paths = shortest_paths_from(net, origin, edge_cost)
    if dest not in paths:
        raise NetworkValidationError([Violation("disconnected", (origin, dest))])
    return paths[dest]


def path_cost(path: Sequence[str], edge_cost: EdgeCost = None) -> float:
    cost = _cost_fn(edge_cost)
    return sum(cost(e) for e in path_edges(path))


@dataclass(frozen=True)
class DemandMatrix:
    """Per-period passenger mass for ordered OD pairs."""

    entries: Mapping[ODPair, float]
    period: str = DEFAULT_PERIODS[0]

    def __post_init__(self):
        clean = {}
        for (o, d), v in self.entries.items():
            v = float(v)
            if not v == v or v in (float("inf"), float("-inf")):
                raise ValueError(f"non-finite demand for {(o, d)}")
            if v < 0:
                raise ValueError(f"negative demand {v} for {(o, d)}")
            if o == d:
                if v != 0:
                    raise ValueError(f"diagonal demand for {(o, d)} must be zero")
                continue
            clean[(o, d)] = v
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(clean.items()))))

    def __getitem__(self, od: ODPair) -> float:
        return self.entries.get(od, 0.0)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return self.entries.items()

    def positive(self) -> Iterator[Tuple[ODPair, float]]:
        for od, v in self.entries.items():
            if v > 0:
                yield od, v

    def stations(self) -> set:
        return {s for od in self.entries for s in od}

    def require_full_support(self, net: TransitNetwork) -> None:
        missing = [od for od in net.od_pairs() if self[od] <= 0]
        if missing:
            raise ValueError(f"demand lacks full support: {len(missing)} OD pairs are zero, e.g. {missing[0]}")


@dataclass(frozen=True)
class EdgeFlows:
    """Direction-aggregated passenger mass on every undirected edge."""

    entries: Mapping[Edge, float]

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(self.entries.items()))))

    def __getitem__(self, edge: Edge) -> float:
        return self.entries[edge_key(*edge)]

    def get(self, edge: Edge, default: float = 0.0) -> float:
        return self.entries.get(edge_key(*edge), default)

    def items(self):
        return self.entries.items()

    def total(self) -> float:
        return float(sum(self.entries.values()))


def assign_flows(net: TransitNetwork, demand: DemandMatrix, edge_cost: EdgeCost = None) -> EdgeFlows:
    """Load every positive OD demand onto its shortest path (hop count by default)."""
    net.require_valid()
    unknown = sorted(demand.stations() - net.station_set)
    if unknown:
        raise KeyError(f"demand references unknown station(s): {', '.join(unknown)}")
    flows = {e: 0.0 for e in net.edge_set}
    by_origin: dict[str, list] = defaultdict(list)
    for (o, d), v in demand.positive():
        by_origin[o].append((d, v))
    for o in sorted(by_origin):
        paths = shortest_paths_from(net, o, edge_cost)
        for d, v in by_origin[o]:
            for e in path_edges(paths[d]):
                flows[e] += v
    return EdgeFlows(flows)


def total_traffic(demand: DemandMatrix) -> float:
    return float(sum(v for _, v in demand.items()))
