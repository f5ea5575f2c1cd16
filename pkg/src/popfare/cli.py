"""Command-line entry point: ``popfare <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from popfare import __version__
from popfare.counterfactual import (
    DEFAULT_LAMBDA_TOTAL,
    ScenarioConfig,
    prepare_scenario,
    revenue_full_compliance,
    run_scenario,
    summarize_prices,
)
from popfare.datasets import PEAK_FLAGS, RunManifest, open_bundle, new_manifest, write_prices
from popfare.equilibrium import compute_ic_equilibrium
from popfare.errors import ConvergenceError, NetworkValidationError, PopfareError
from popfare.line_model import (
    InspectorDensity,
    LineDemandDensity,
    LineStrategy,
    QuadratureConfig,
    check_inspector_optimality,
    inspection_probability,
    line_revenue,
    pass_density,
    strategy_cost_line,
)
from popfare.network import assign_flows, total_traffic, validate_network
from popfare.pricing import (
    calibrate_alpha,
    ic_edge_prices,
    inspector_mass_from_staffing,
    od_ic_prices,
    proportional_plan,
    uniform_plan,
)
from popfare.report import SimulationResults, emit_report, fmt_currency
from popfare.strategy import check_incentive_compatibility
from popfare.synthetic import generate_synthetic
from popfare.technology import MonitoringTechnology

log = logging.getLogger("popfare")


def _split(text: str | None):
    return [t.strip() for t in text.split(",") if t.strip()] if text else None


def _emit(obj, args) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_validate(args) -> int:
    bundle = open_bundle(args.bundle)
    try:
        net = bundle.network()
    except NetworkValidationError as exc:
        for v in exc.violations:
            print(f"INVALID {v}")
        return exc.exit_code
    problems = validate_network(net) + bundle.cross_validate()
    for v in problems:
        print(f"INVALID {v}")
    if problems:
        return NetworkValidationError(problems).exit_code
    print(f"OK {net.n_stations} stations, {len(net.edge_set)} edges, periods: {', '.join(bundle.periods())}")
    return 0


def cmd_generate(args) -> int:
    bundle = generate_synthetic(
        seed=args.seed,
        n_stations=args.stations,
        n_lines=args.lines,
        demand_scale=args.demand_scale,
        price_band=(args.price_min, args.price_max),
        out_dir=args.out,
    )
    print(f"wrote bundle to {bundle.directory}")
    return 0


def _scenario_inputs(args):
    bundle = open_bundle(args.bundle)
    net = bundle.network()
    return bundle, net


def cmd_calibrate(args) -> int:
    if args.revenue is not None:
        lam = args.lam_total if args.lam_total is not None else DEFAULT_LAMBDA_TOTAL
        alpha = args.revenue / lam
        print(f"alpha = {fmt_currency(alpha)} ({alpha!r})")
        return 0
    if args.staffing:
        lam = inspector_mass_from_staffing(args.inspectors, args.period_minutes, args.minutes_per_station, args.edges)
        print(f"lambda_total = {lam:g}")
        return 0
    if not args.bundle:
        raise SystemExit("calibrate needs --bundle, --revenue or --staffing")
    bundle, net = _scenario_inputs(args)
    lam = args.lam_total if args.lam_total is not None else DEFAULT_LAMBDA_TOTAL
    tech = MonitoringTechnology.parse(args.technology)
    out = {}
    for period in _split(args.periods) or bundle.periods():
        demand = bundle.demand(period)
        flows = assign_flows(net, demand)
        plan = uniform_plan(net, lam, tech) if args.monitoring == "uniform" else proportional_plan(net, flows, lam, tech)
        target = revenue_full_compliance(demand, bundle.legacy_prices(period))
        alpha = calibrate_alpha(target, plan, flows, solve=not tech.is_identity)
        out[period] = {"revenue": target, "lam_total": lam, "alpha": alpha}
        print(f"{period}: revenue {fmt_currency(target)}, lambda_total {lam:g} -> alpha {fmt_currency(alpha)}")
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return 0


def _config(args, period: str, pricing: str) -> ScenarioConfig:
    return ScenarioConfig(
        period=period,
        monitoring=args.monitoring,
        pricing=pricing,
        model=args.model,
        alpha=args.alpha,
        lam_total=args.lam_total if args.lam_total is not None else DEFAULT_LAMBDA_TOTAL,
        technology=args.technology,
        tie_tol=args.tol,
        adjust_tol=args.tol,
        max_iterations=args.max_iterations,
    )


def cmd_prices(args) -> int:
    bundle, net = _scenario_inputs(args)
    period = args.period or bundle.periods()[0]
    cfg = _config(args, period, args.kind)
    state, _, trace = prepare_scenario(cfg, net, bundle.demand(period), bundle.legacy_prices(period))
    out = Path(args.out) if args.out else Path(args.out_dir) / f"prices_{args.kind}_{args.monitoring}_{period}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_prices({PEAK_FLAGS.get(period, period): state.scheme}, out)
    summary = summarize_prices(state.scheme, bundle.legacy_prices(period), bundle.demand(period))
    print(
        f"{args.kind} prices ({args.monitoring}, {period}, alpha {fmt_currency(state.alpha)}): "
        f"min {fmt_currency(summary.minimum)}, median {fmt_currency(summary.median)}, max {fmt_currency(summary.maximum)}; "
        f"written to {out}" + (f"; {trace.iterations} adjustment rounds" if args.kind == "capped-ic" else "")
    )
    return 0


def cmd_check_ic(args) -> int:
    from popfare.datasets import load_prices

    bundle, net = _scenario_inputs(args)
    period = args.period or bundle.periods()[0]
    demand = bundle.demand(period)
    prices = load_prices(args.prices, args.peak_flag or PEAK_FLAGS.get(period))
    cfg = _config(args, period, "legacy")
    state, _, _ = prepare_scenario(cfg, net, demand, bundle.legacy_prices(period))
    violations = check_incentive_compatibility(prices, state.plan, state.flows, net, state.alpha, args.model, demand, args.tol)
    print(f"{len(violations)} violation(s) [{args.model}-ticket deviations, alpha {fmt_currency(state.alpha)}]")
    for v in violations[: args.show]:
        print(f"  {v.od[0]}-{v.od[1]}: full {v.full_price} > witness {v.witness_cost.total:.6f} via {'-'.join(v.witness.path)} tickets {v.witness.tickets}")
    if args.out:
        import csv

        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["origin", "destination", "full_price", "witness_cost", "witness_path", "witness_tickets"])
            for v in violations:
                w.writerow([v.od[0], v.od[1], repr(v.full_price), repr(v.witness_cost.total), " ".join(v.witness.path),
                            " ".join(f"{a}:{b}" for a, b in v.witness.tickets)])
    return 0


def cmd_equilibrium(args) -> int:
    bundle, net = _scenario_inputs(args)
    period = args.period or bundle.periods()[0]
    demand = bundle.demand(period)
    cfg = _config(args, period, "legacy")
    state, _, _ = prepare_scenario(cfg, net, demand, bundle.legacy_prices(period))
    flows, prices, report = compute_ic_equilibrium(net, demand, state.plan, state.alpha, args.max_iterations, args.tol)
    summary = report.as_dict()
    summary.update(period=period, alpha=state.alpha)
    _emit(summary, args)
    if args.out:
        write_prices({"edge": od_ic_prices(net, prices)}, args.out)
    if not report.converged:
        return ConvergenceError("equilibrium iteration did not converge", summary["final_residual"], report.iterations).exit_code
    return 0


def _line_density(text: str) -> LineDemandDensity:
    name, _, arg = text.partition(":")
    if name == "constant":
        return LineDemandDensity.constant(float(arg or 1.0))
    if name == "separable":
        xs, _, ys = arg.partition("/")
        return LineDemandDensity.separable([float(c) for c in xs.split()], [float(c) for c in ys.split()])
    raise SystemExit(f"unknown demand density {text!r} (constant[:c] or separable:'a0 a1/b0 b1')")


def cmd_line_model(args) -> int:
    quad = QuadratureConfig(args.nodes, args.quad_tol)
    d = _line_density(args.demand)
    lam = InspectorDensity.uniform(1.0)
    phi = MonitoringTechnology.parse(args.technology)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trips):
        x, y = sorted(rng.uniform(0, 1, size=2))
        cuts = np.sort(rng.uniform(x, y, size=2 * rng.integers(0, 4)))
        segs = tuple(zip(cuts[0::2], cuts[1::2]))
        s = LineStrategy(x, y, segs)
        full = args.alpha * inspection_probability(x, y, lam, phi, d, quad)
        worst = max(worst, abs(strategy_cost_line(s, args.alpha, lam, phi, d, quad=quad) - full))
    opt = check_inspector_optimality(lam, phi, d, args.alpha, quad, args.perturbations, args.seed)
    out = {
        "pass_density_at_half": pass_density(d, 0.5, quad),
        "q_0.25_0.75": inspection_probability(0.25, 0.75, lam, phi, d, quad),
        "revenue": line_revenue(lam, phi, d, args.alpha, quad),
        "indifference_max_gap": worst,
        "stationarity_residual": opt.stationarity_residual,
        "max_revenue_delta": max(opt.revenue_deltas, default=0.0),
        "perturbations_nonpositive": opt.all_nonpositive,
    }
    _emit(out, args)
    return 0


def run_simulation(bundle, net, scenarios: list, summaries: bool = True) -> SimulationResults:
    results = SimulationResults()
    periods = []
    for cfg in scenarios:
        if cfg.period not in periods:
            periods.append(cfg.period)
    results.periods = periods
    for period in periods:
        demand = bundle.demand(period)
        legacy = bundle.legacy_prices(period)
        results.traffic[period] = (total_traffic(demand), revenue_full_compliance(demand, legacy))
        if summaries:
            results.summaries[(period, "legacy")] = summarize_prices(legacy, legacy, demand)
            monitors = sorted({c.monitoring for c in scenarios if c.period == period and c.monitoring != "explicit"})
            for mon in monitors:
                base = next(c for c in scenarios if c.period == period and c.monitoring == mon)
                cfg = ScenarioConfig(**{**base.to_dict(), "pricing": "ic"})
                state, _, _ = prepare_scenario(cfg, net, demand, legacy)
                results.summaries[(period, state.scheme.provenance)] = summarize_prices(state.scheme, legacy, demand)
        for cfg in (c for c in scenarios if c.period == period):
            log.info("running %s / %s / %s", period, cfg.monitoring, cfg.pricing)
            results.scenarios.append(run_scenario(cfg, net, demand, legacy))
    return results


def cmd_simulate(args) -> int:
    if args.manifest:
        manifest = RunManifest.read(args.manifest)
        bundle = open_bundle(args.bundle or manifest.bundle, verify=False)
        bundle.checksums = manifest.input_checksums
        bundle.verify()
        scenarios = [ScenarioConfig(**c) for c in manifest.scenarios]
        formats = manifest.options.get("formats", ["csv", "text"])
    else:
        bundle, _ = _scenario_inputs(args)
        periods = _split(args.periods) or bundle.periods()
        monitors = _split(args.monitorings) or ["uniform", "proportional"]
        pricings = _split(args.pricing) or ["legacy", "capped-ic"]
        scenarios = []
        for period in periods:
            for mon in monitors:
                args.monitoring = mon
                for pricing in pricings:
                    scenarios.append(_config(args, period, pricing))
        formats = ["csv", "text"] if args.format == "both" else [args.format]
        stamp = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
        manifest = new_manifest(bundle, [c.to_dict() for c in scenarios], stamp, args.seed, {"formats": formats})
    net = bundle.network()
    results = run_simulation(bundle, net, scenarios)
    out = Path(args.out)
    written = emit_report(results, out, formats)
    manifest.write(out / "manifest.json")
    for p in written + [out / "manifest.json"]:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-9, help="tie / convergence tolerance (currency units)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--format", choices=["csv", "text", "both"], default="both")
    common.add_argument("-v", "--verbose", action="store_true")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--bundle", help="dataset bundle directory")
    scen.add_argument("--period")
    scen.add_argument("--monitoring", choices=["uniform", "proportional"], default="uniform")
    scen.add_argument("--model", choices=["multi", "single"], default="multi", help="deviation model")
    scen.add_argument("--alpha", type=float, help="explicit fine (default: calibrated to legacy revenue)")
    scen.add_argument("--lam-total", type=float, help=f"total inspector mass (default {DEFAULT_LAMBDA_TOTAL:g})")
    scen.add_argument("--technology", default="identity", help="identity | linear:K | power:GAMMA")
    scen.add_argument("--max-iterations", type=int, default=100)

    p = argparse.ArgumentParser(prog="popfare", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("validate", parents=[common], help="validate a dataset bundle")
    s.add_argument("--bundle", required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("generate", parents=[common], help="write a seeded synthetic bundle")
    s.add_argument("--stations", type=int, default=91)
    s.add_argument("--lines", type=int, default=6)
    s.add_argument("--demand-scale", type=float, default=729_110.0)
    s.add_argument("--price-min", type=float, default=2.0)
    s.add_argument("--price-max", type=float, default=6.0)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("prices", parents=[common, scen], help="compute IC or capped-IC price tables")
    s.add_argument("--kind", choices=["ic", "capped-ic"], default="ic")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_prices)

    s = sub.add_parser("calibrate", parents=[common, scen], help="fine level alpha = revenue / lambda_total")
    s.add_argument("--periods")
    s.add_argument("--revenue", type=float, help="calibrate directly from a revenue target")
    s.add_argument("--staffing", action="store_true", help="derive lambda_total from staffing assumptions")
    s.add_argument("--inspectors", type=float, default=30)
    s.add_argument("--period-minutes", type=float, default=360)
    s.add_argument("--minutes-per-station", type=float, default=2.69)
    s.add_argument("--edges", type=int, default=88)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", parents=[common, scen], help="run scenarios and write report tables")
    s.add_argument("--periods")
    s.add_argument("--monitorings", help="comma list (default uniform,proportional)")
    s.add_argument("--pricing", help="comma list of legacy, ic, capped-ic (default legacy,capped-ic)")
    s.add_argument("--manifest", help="re-run exactly from a manifest.json")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("check-ic", parents=[common, scen], help="audit a price table for profitable deviations")
    s.add_argument("--prices", required=True)
    s.add_argument("--peak-flag")
    s.add_argument("--show", type=int, default=10)
    s.set_defaults(func=cmd_check_ic)

    s = sub.add_parser("equilibrium", parents=[common, scen], help="route equilibrium with endogenous prices")
    s.set_defaults(func=cmd_equilibrium)

    s = sub.add_parser("line-model", parents=[common], help="quadrature experiments on the unit line")
    s.add_argument("--demand", default="constant", help="constant[:c] | separable:'a0 a1/b0 b1'")
    s.add_argument("--technology", default="identity")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--nodes", type=int, default=512)
    s.add_argument("--quad-tol", type=float, default=1e-6)
    s.add_argument("--trips", type=int, default=100)
    s.add_argument("--perturbations", type=int, default=20)
    s.set_defaults(func=cmd_line_model)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "bundle", "unset") is None and args.verb in ("prices", "check-ic", "equilibrium"):
        print("error: --bundle is required", file=sys.stderr)
        return 2
    if args.verb == "simulate" and not args.manifest and not args.bundle:
        print("error: simulate needs --bundle or --manifest", file=sys.stderr)
        return 2
    if args.verb in ("simulate", "generate") and not args.out:
        print(f"error: {args.verb} needs --out", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except PopfareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (KeyError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
