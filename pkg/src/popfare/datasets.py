"""CSV ingestion/emission for networks, demand and tariffs, plus dataset
bundles and run manifests.

Formats (headered CSV):

* ``stations.csv``: ``station_id``
* ``edges.csv``: ``station_a,station_b``
* ``demand.csv``: ``origin,destination,period,passengers``
* ``prices.csv``: ``origin,destination,peak_flag,price``

Floats are written with ``repr`` so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from popfare import __version__
from popfare.errors import NetworkValidationError, ParseError
from popfare.network import DEFAULT_PERIODS, DemandMatrix, TransitNetwork, Violation, validate_network
from popfare.pricing import PricingScheme

PEAK_FLAGS = {"AM-peak": "peak", "Midday": "offpeak", "PM-peak": "peak", "Evening": "offpeak"}
PRICE_ASYMMETRY_TOL = 0.005

STATIONS_FILE = "stations.csv"
EDGES_FILE = "edges.csv"
DEMAND_FILE = "demand.csv"
PRICES_FILE = "prices.csv"
BUNDLE_FILE = "bundle.json"


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _rows(path, required: Iterable[str]):
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", str(path))
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {', '.join(missing)}", str(path), 1)
        for row in reader:
            if not any((v or "").strip() for v in row.values()):
                continue
            yield reader.line_num, {k: (v or "").strip() for k, v in row.items() if k is not None}


def _number(text: str, path, line: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{what} {text!r} is not a number", str(path), line) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ParseError(f"{what} must be finite", str(path), line)
    if value < 0:
        raise ParseError(f"negative {what} {value}", str(path), line)
    return value


def load_network(edges_path, stations_path=None) -> TransitNetwork:
    """Read an edge list (and optional station list) and validate it."""
    stations = None
    if stations_path is not None:
        stations = [row["station_id"] for _, row in _rows(stations_path, ["station_id"])]
        known = set(stations)
    edges = []
    for line, row in _rows(edges_path, ["station_a", "station_b"]):
        a, b = row["station_a"], row["station_b"]
        if not a or not b:
            raise ParseError("empty station id", str(edges_path), line)
        if stations is not None:
            for s in (a, b):
                if s not in known:
                    raise ParseError(f"unknown station {s!r}", str(edges_path), line)
        edges.append((a, b))
    net = TransitNetwork.from_edges(edges, stations)
    problems = validate_network(net)
    if problems:
        raise NetworkValidationError(problems)
    return net


def load_demand(path, period: str) -> DemandMatrix:
    """OD masses for one period; repeated rows are summed."""
    entries: Dict = {}
    for line, row in _rows(path, ["origin", "destination", "period", "passengers"]):
        if row["period"] != period:
            continue
        o, d = row["origin"], row["destination"]
        v = _number(row["passengers"], path, line, "passenger count")
        if o == d and v != 0:
            raise ParseError(f"non-zero demand from {o!r} to itself", str(path), line)
        if o != d:
            entries[(o, d)] = entries.get((o, d), 0.0) + v
    return DemandMatrix(entries, period)


def demand_periods(path) -> list[str]:
    seen = {}
    for _, row in _rows(path, ["period"]):
        seen.setdefault(row["period"])
    return list(seen)


def load_prices(path, peak_flag: Optional[str] = None) -> PricingScheme:
    """Tariff for one peak flag. Rows may list one or both directions of a
    pair; both directions must agree within half a cent."""
    found: Dict = {}
    seen_ordered = set()
    flags = set()
    for line, row in _rows(path, ["origin", "destination", "peak_flag", "price"]):
        flags.add(row["peak_flag"])
        if peak_flag is not None and row["peak_flag"] != peak_flag:
            continue
        o, d = row["origin"], row["destination"]
        if o == d:
            raise ParseError(f"price row for identical endpoints {o!r}", str(path), line)
        p = _number(row["price"], path, line, "price")
        key = (o, d, row["peak_flag"])
        if key in seen_ordered:
            raise ParseError(f"duplicate price row for {o}-{d}", str(path), line)
        seen_ordered.add(key)
        pair = (min(o, d), max(o, d), row["peak_flag"])
        if pair in found:
            if abs(found[pair] - p) > PRICE_ASYMMETRY_TOL:
                raise ParseError(
                    f"asymmetric prices for {o}-{d}: {found[pair]} vs {p}", str(path), line
                )
            continue
        found[pair] = p
    if peak_flag is None and len(flags) > 1:
        raise ParseError(f"price file has several peak flags {sorted(flags)}; choose one", str(path))
    return PricingScheme({(a, b): p for (a, b, _), p in found.items()}, "legacy")


def write_network(net: TransitNetwork, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / STATIONS_FILE).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id"])
        for s in sorted(net.station_set):
            w.writerow([s])
    with (directory / EDGES_FILE).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_a", "station_b"])
        for a, b in net.edge_set:
            w.writerow([a, b])


def write_demand(demands: Iterable[DemandMatrix], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin", "destination", "period", "passengers"])
        for dm in demands:
            for (o, d), v in dm.items():
                w.writerow([o, d, dm.period, repr(float(v))])


def write_prices(schemes: Mapping[str, PricingScheme], path, decimals: Optional[int] = None) -> None:
    """``schemes`` maps peak flag to scheme; ``decimals=None`` keeps full precision."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin", "destination", "peak_flag", "price"])
        for flag, scheme in schemes.items():
            for (a, b), p in scheme.items():
                w.writerow([a, b, flag, repr(float(p)) if decimals is None else f"{p:.{decimals}f}"])


@dataclass
class DatasetBundle:
    directory: Path
    checksums: Dict[str, str] = field(default_factory=dict)

    @property
    def stations_path(self) -> Path:
        return self.directory / STATIONS_FILE

    @property
    def edges_path(self) -> Path:
        return self.directory / EDGES_FILE

    @property
    def demand_path(self) -> Path:
        return self.directory / DEMAND_FILE

    @property
    def prices_path(self) -> Optional[Path]:
        p = self.directory / PRICES_FILE
        return p if p.exists() else None

    def files(self) -> list[Path]:
        out = [self.stations_path, self.edges_path, self.demand_path]
        if self.prices_path is not None:
            out.append(self.prices_path)
        return [p for p in out if p.exists()]

    def compute_checksums(self) -> Dict[str, str]:
        return {p.name: sha256(p) for p in self.files()}

    def verify(self) -> None:
        actual = self.compute_checksums()
        for name, digest in self.checksums.items():
            if actual.get(name) != digest:
                raise ParseError(f"checksum mismatch for {name}", str(self.directory / name))

    def network(self) -> TransitNetwork:
        stations = self.stations_path if self.stations_path.exists() else None
        return load_network(self.edges_path, stations)

    def periods(self) -> list[str]:
        found = demand_periods(self.demand_path)
        ordered = [p for p in DEFAULT_PERIODS if p in found]
        return ordered + [p for p in found if p not in ordered]

    def demand(self, period: str) -> DemandMatrix:
        return load_demand(self.demand_path, period)

    def legacy_prices(self, period: str) -> PricingScheme:
        if self.prices_path is None:
            raise ParseError("bundle has no legacy price file", str(self.directory))
        return load_prices(self.prices_path, PEAK_FLAGS.get(period, period))

    def cross_validate(self) -> list[Violation]:
        """Stations referenced by demand or prices must exist in the network."""
        net = self.network()
        problems = []
        for period in self.periods():
            extra = sorted(self.demand(period).stations() - net.station_set)
            if extra:
                problems.append(Violation("unknown-station", (f"demand[{period}]",) + tuple(extra[:5])))
        if self.prices_path is not None:
            flags = sorted({row["peak_flag"] for _, row in _rows(self.prices_path, ["peak_flag"])})
            for flag in flags:
                scheme = load_prices(self.prices_path, flag)
                extra = sorted({s for od, _ in scheme.items() for s in od} - net.station_set)
                if extra:
                    problems.append(Violation("unknown-station", (f"prices[{flag}]",) + tuple(extra[:5])))
        return problems

    def write_index(self) -> None:
        self.checksums = self.compute_checksums()
        payload = {"files": self.checksums}
        (self.directory / BUNDLE_FILE).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def open_bundle(directory, verify: bool = True) -> DatasetBundle:
    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError("bundle directory not found", str(directory))
    index = directory / BUNDLE_FILE
    checksums = json.loads(index.read_text())["files"] if index.exists() else {}
    bundle = DatasetBundle(directory, checksums)
    if verify and checksums:
        bundle.verify()
    if not checksums:
        bundle.checksums = bundle.compute_checksums()
    return bundle


@dataclass
class RunManifest:
    tool_version: str
    bundle: str
    input_checksums: Dict[str, str]
    scenarios: list  # ScenarioConfig dicts
    timestamp: str
    seed: int = 0
    options: Dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())


def new_manifest(bundle: DatasetBundle, scenarios: list, timestamp: str, seed: int = 0, options=None) -> RunManifest:
    return RunManifest(__version__, str(bundle.directory), dict(bundle.checksums), scenarios, timestamp, seed, options or {})
