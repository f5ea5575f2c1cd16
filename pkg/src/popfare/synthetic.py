"""Seeded synthetic metro: multi-line network, gravity demand and a
distance-banded tariff."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from popfare.datasets import DatasetBundle, write_demand, write_network, write_prices, DEMAND_FILE, PRICES_FILE
from popfare.network import DEFAULT_PERIODS, DemandMatrix, TransitNetwork, edge_key, path_edges, shortest_paths_from
from popfare.pricing import PricingScheme

# daily trip split across the four periods (AM, Midday, PM, Evening)
PERIOD_SHARES = (0.324, 0.196, 0.355, 0.125)
PERIOD_FLAGS = ("peak", "offpeak", "peak", "offpeak")
OFFPEAK_SPAN = 0.4625  # off-peak fares top out at this fraction of the band


@dataclass
class SyntheticDataset:
    network: TransitNetwork
    edge_km: Dict[Tuple[str, str], float]
    demands: Dict[str, DemandMatrix]
    tariffs: Dict[str, PricingScheme]  # peak flag -> scheme


def _build_lines(rng, n_stations: int, n_lines: int):
    if n_lines < 1 or n_stations < 2:
        raise ValueError("need at least one line and two stations")
    if n_stations < 2 * n_lines:
        raise ValueError("too few stations for the requested number of lines")
    sizes = np.full(n_lines, n_stations // n_lines)
    sizes[: n_stations % n_lines] += 1
    counter = iter(range(1, n_stations + 1))
    width = max(3, len(str(n_stations)))
    new = lambda: f"S{next(counter):0{width}d}"
    lines = []
    existing: list[str] = []
    for li, size in enumerate(sizes):
        fresh = [new() for _ in range(int(size))]
        if li == 0:
            seq = fresh
        else:
            k = min(2, len(existing))
            transfers = [existing[i] for i in sorted(rng.choice(len(existing), size=k, replace=False))]
            cut = sorted(rng.choice(np.arange(1, len(fresh)), size=k, replace=False)) if len(fresh) > k else list(range(k))
            seq, prev = [], 0
            for c, t in zip(cut, transfers):
                seq += fresh[prev:c] + [t]
                prev = c
            seq += fresh[prev:]
        lines.append(seq)
        existing.extend(fresh)
    return lines


def synthesize(
    seed: int = 0,
    n_stations: int = 91,
    n_lines: int = 6,
    demand_scale: float = 729_110.0,
    price_band: Tuple[float, float] = (2.0, 6.0),
    distance_decay: float = 0.12,
) -> SyntheticDataset:
    lo, hi = price_band
    if not (0 < lo < hi):
        raise ValueError("price band must satisfy 0 < min < max")
    if not demand_scale > 0:
        raise ValueError("demand scale must be positive")
    rng = np.random.default_rng(seed)
    lines = _build_lines(rng, n_stations, n_lines)
    edges = {}
    for seq in lines:
        for a, b in zip(seq, seq[1:]):
            e = edge_key(a, b)
            if e not in edges:
                edges[e] = float(np.round(rng.lognormal(math.log(1.4), 0.35), 3))
    net = TransitNetwork.from_edges(sorted(edges), sorted({s for seq in lines for s in seq}))
    net.require_valid()

    stations = sorted(net.station_set)
    hops = {}
    km = {}
    for o in stations:
        for d, path in shortest_paths_from(net, o).items():
            if d != o:
                hops[(o, d)] = len(path) - 1
                km[(o, d)] = sum(edges[e] for e in path_edges(path))

    attraction = dict(zip(stations, rng.lognormal(0.0, 0.8, size=len(stations))))
    demands = {}
    for period, share in zip(DEFAULT_PERIODS, PERIOD_SHARES):
        raw = {}
        noise = rng.lognormal(0.0, 0.3, size=len(hops))
        for (od, h), eps in zip(sorted(hops.items()), noise):
            raw[od] = attraction[od[0]] * attraction[od[1]] * math.exp(-distance_decay * h) * eps
        scale = demand_scale * share / sum(raw.values())
        demands[period] = DemandMatrix({od: max(round(v * scale, 3), 0.001) for od, v in raw.items()}, period)

    dists = np.array([km[od] for od in sorted(km) if od[0] < od[1]])
    free_km = float(np.quantile(dists, 0.10))
    full_km = float(np.quantile(dists, 0.85))
    tariffs = {}
    for flag, (flo, fhi) in {
        "peak": (lo + 0.25 * (hi - lo) / 4.0, hi),
        "offpeak": (lo, lo + OFFPEAK_SPAN * (hi - lo)),
    }.items():
        rate = (fhi - flo) / max(full_km - free_km, 1e-9)
        table = {}
        for (o, d), dist in sorted(km.items()):
            if o < d:
                raw_price = flo + rate * max(0.0, dist - free_km)
                table[(o, d)] = float(min(fhi, max(flo, round(raw_price * 20) / 20)))
        tariffs[flag] = PricingScheme(table, "legacy")
    return SyntheticDataset(net, edges, demands, tariffs)


def write_bundle(data: SyntheticDataset, directory) -> DatasetBundle:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_network(data.network, directory)
    write_demand(data.demands.values(), directory / DEMAND_FILE)
    write_prices(data.tariffs, directory / PRICES_FILE)
    bundle = DatasetBundle(directory)
    bundle.write_index()
    return bundle


def generate_synthetic(
    seed: int = 0,
    n_stations: int = 91,
    n_lines: int = 6,
    demand_scale: float = 729_110.0,
    price_band: Tuple[float, float] = (2.0, 6.0),
    out_dir=None,
):
    """Synthesize a dataset; with ``out_dir`` also write it as a bundle and return that."""
    data = synthesize(seed, n_stations, n_lines, demand_scale, price_band)
    if out_dir is None:
        return data
    return write_bundle(data, out_dir)
