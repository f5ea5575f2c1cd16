"""Report tables: machine CSV (rounded and full precision) and aligned text."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from popfare.counterfactual import PriceSummary, SimulationReport

SCENARIO_FIELDS = [
    "period",
    "monitoring",
    "pricing",
    "model",
    "alpha",
    "lam_total",
    "trips",
    "share_full",
    "share_partial",
    "share_unpaid",
    "revenue",
    "full_compliance_revenue",
    "baseline_revenue",
    "partial_loss",
    "no_ticket_loss",
    "loss_pct",
    "adjust_iterations",
]
CURRENCY = {"alpha", "revenue", "full_compliance_revenue", "baseline_revenue", "partial_loss", "no_ticket_loss"}
PERCENT = {"share_full", "share_partial", "share_unpaid", "loss_pct"}
TRAFFIC_FIELDS = ["period", "trips", "revenue"]
SUMMARY_FIELDS = ["period", "scheme", "min_price", "median_price", "max_price", "share_below_legacy", "share_below_legacy_weighted"]


def fmt_currency(value: float) -> str:
    text = f"{abs(value):,.2f}"
    return f"-${text}" if value < 0 and round(value, 2) != 0 else f"${text}"


def fmt_pct(value: float) -> str:
    return f"{value * 100:.2f}%"


@dataclass
class SimulationResults:
    periods: List[str] = field(default_factory=list)
    traffic: Dict[str, Tuple[float, float]] = field(default_factory=dict)  # period -> (trips, legacy revenue)
    summaries: Dict[Tuple[str, str], PriceSummary] = field(default_factory=dict)  # (period, scheme) -> summary
    scenarios: List[SimulationReport] = field(default_factory=list)


def _scenario_row(r: SimulationReport, full: bool) -> list:
    row = []
    for name in SCENARIO_FIELDS:
        v = getattr(r, name)
        if full and isinstance(v, float):
            row.append(repr(v))
        elif name in CURRENCY:
            row.append(f"{v:.2f}")
        elif name in PERCENT:
            row.append(f"{v * 100:.2f}")
        elif name in ("trips", "lam_total"):
            row.append(f"{v:.2f}")
        else:
            row.append(str(v))
    return row


def _write_csv(path: Path, header: list, rows: list) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _table(title: str, columns: List[str], rows: List[Tuple[str, List[str]]]) -> str:
    label_w = max([len(r[0]) for r in rows] + [len(title), 8])
    widths = [max([len(c)] + [len(r[1][i]) for r in rows]) for i, c in enumerate(columns)]
    lines = [title, " " * label_w + " | " + " | ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines.append("-" * len(lines[-1]))
    for label, cells in rows:
        lines.append(label.ljust(label_w) + " | " + " | ".join(c.rjust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def _total(reports: List[SimulationReport]) -> dict:
    trips = sum(r.trips for r in reports)
    base = sum(r.baseline_revenue for r in reports)
    rev = sum(r.revenue for r in reports)
    return {
        "share_full": sum(r.trips_full for r in reports) / trips if trips else 0.0,
        "share_partial": sum(r.trips_partial for r in reports) / trips if trips else 0.0,
        "share_unpaid": sum(r.trips_unpaid for r in reports) / trips if trips else 0.0,
        "revenue": rev,
        "partial_loss": sum(r.partial_loss for r in reports),
        "no_ticket_loss": sum(r.no_ticket_loss for r in reports),
        "loss_pct": (base - rev) / base if base else 0.0,
    }


def render_text(results: SimulationResults) -> str:
    periods = list(results.periods)
    cols = periods + ["Total"]
    blocks = []

    rows = [
        ("Total traffic", [f"{results.traffic[p][0]:,.0f}" for p in periods] + [f"{sum(t for t, _ in results.traffic.values()):,.0f}"]),
        ("Revenue", [fmt_currency(results.traffic[p][1]) for p in periods] + [fmt_currency(sum(r for _, r in results.traffic.values()))]),
    ] if results.traffic else []
    blocks.append(_table("Passenger traffic and revenue under legacy prices", cols, rows))

    schemes = sorted({s for _, s in results.summaries}, key=lambda s: (s != "legacy", s))
    rows = []
    for scheme in schemes:
        get = lambda p: results.summaries.get((p, scheme))
        rows.append((f"[{scheme}] minimum", [fmt_currency(get(p).minimum) if get(p) else "" for p in periods]))
        rows.append((f"[{scheme}] median", [fmt_currency(get(p).median) if get(p) else "" for p in periods]))
        rows.append((f"[{scheme}] maximum", [fmt_currency(get(p).maximum) if get(p) else "" for p in periods]))
        if scheme != "legacy":
            rows.append((f"[{scheme}] trips where < legacy", [
                fmt_pct(get(p).share_below_weighted if get(p).share_below_weighted is not None else get(p).share_below)
                if get(p) else "" for p in periods
            ]))
    blocks.append(_table("Legacy and incentive-compatible prices", periods, rows))

    for pricing, title in (
        ("legacy", "Random inspection under legacy prices"),
        ("capped-ic", "IC prices capped by legacy prices"),
        ("ic", "Uncapped IC prices"),
    ):
        groups: Dict[Tuple[str, str], Dict[str, SimulationReport]] = {}
        for r in results.scenarios:
            if r.pricing == pricing:
                groups.setdefault((r.monitoring, r.model), {})[r.period] = r
        if not groups and pricing != "legacy" and pricing != "capped-ic":
            continue
        rows = []
        for (mon, model), by_period in sorted(groups.items()):
            tot = _total([by_period[p] for p in periods if p in by_period])
            tag = f"[{mon}/{model}]"

            def line(label, attr, fmt):
                cells = [fmt(getattr(by_period[p], attr)) if p in by_period else "" for p in periods]
                rows.append((f"{tag} {label}", cells + [fmt(tot[attr])]))

            if pricing == "legacy":
                line("partially paid trips", "share_partial", fmt_pct)
                line("trips without tickets", "share_unpaid", fmt_pct)
                line("fully paid trips", "share_full", fmt_pct)
                line("revenue", "revenue", fmt_currency)
                line("losses due to partial tickets", "partial_loss", fmt_currency)
                line("losses due to no ticket", "no_ticket_loss", fmt_currency)
            else:
                line("revenue", "revenue", fmt_currency)
                line("revenue loss percentage", "loss_pct", fmt_pct)
        blocks.append(_table(title, cols, rows))
    return "\n\n".join(blocks) + "\n"


def emit_report(results: SimulationResults, out_dir, formats=("csv", "text")) -> List[Path]:
    """Write report files into ``out_dir`` and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        for name, full in (("scenarios.csv", False), ("scenarios_full.csv", True)):
            _write_csv(out / name, SCENARIO_FIELDS, [_scenario_row(r, full) for r in results.scenarios])
            written.append(out / name)
        _write_csv(
            out / "traffic.csv",
            TRAFFIC_FIELDS,
            [[p, f"{t:.2f}", f"{rev:.2f}"] for p, (t, rev) in results.traffic.items()],
        )
        rows = []
        for (p, scheme), s in results.summaries.items():
            weighted = "" if s.share_below_weighted is None else f"{s.share_below_weighted * 100:.2f}"
            rows.append([p, scheme, f"{s.minimum:.2f}", f"{s.median:.2f}", f"{s.maximum:.2f}", f"{s.share_below * 100:.2f}", weighted])
        _write_csv(out / "price_summary.csv", SUMMARY_FIELDS, rows)
        written += [out / "traffic.csv", out / "price_summary.csv"]
    if "text" in formats:
        (out / "tables.txt").write_text(render_text(results))
        written.append(out / "tables.txt")
    return written
