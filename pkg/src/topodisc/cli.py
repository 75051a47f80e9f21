"""Command-line front end.

Exit codes: 0 ok, 1 usage error, 2 bad input, 3 degenerate input.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bits, chain
from .experiments import (run_delta_sweep, run_random_ensemble, run_threshold_sweep,
                          run_walk_vs_teleport)
from .mobility import WalkConfig, teleport_batch, walk_batch
from .scenario import (ScenarioError, generate_random_scenario, load_raster_scenario, load_scenario,
                       synthetic_power_map, write_power_map)
from .seeding import child
from .tessellation import (DEFAULT_SAMPLES, DegenerateScenarioError, MeasureError,
                           estimate_tessellation, load_measure, save_measure)

EXIT_USAGE, EXIT_INPUT, EXIT_DEGENERATE = 1, 2, 3
HIGH_STD_ERR = 0.01


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _fmt(v) -> str:
    if v is chain.UNREACHABLE:
        return "unreachable"
    if v is chain.UNBOUNDED:
        return "unbounded"
    return f"{v:.4f}"


def _add_stop(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--delta", type=float, default=None, help="stop at δ-knowledge instead of full knowledge (simulate walk defaults to 0.9)")
    g.add_argument("--fk", action="store_true", help="stop at full knowledge (default)")


def _add_scenario_source(p, radius_default, radius_help):
    p.add_argument("--scenario", type=Path, default=None, help="scenario JSON file (default: random)")
    p.add_argument("--neighbours", type=int, default=7, help="random scenario: neighbour count")
    p.add_argument("--radius", type=float, default=radius_default, help=radius_help)
    p.add_argument("--scenario-seed", type=int, default=0, help="random scenario seed")


def _scenario_from(args):
    if args.scenario is not None:
        return load_scenario(args.scenario)
    return generate_random_scenario(args.neighbours, args.radius, args.scenario_seed)


def build_parser() -> argparse.ArgumentParser:
    jobs_default = os.cpu_count() or 1
    parser = _Parser(prog="topodisc", description="Crowdsourced local topology discovery toolkit.",
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tessellate", help="estimate tile measures by Monte Carlo",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("scenario", nargs="?", type=Path, help="scenario JSON file")
    p.add_argument("--random", nargs=3, metavar=("N", "RADIUS", "SEED"), default=None,
                   help="generate a random disc scenario instead of reading a file")
    p.add_argument("--raster", type=Path, default=None, help="raster power-map file instead of a scenario")
    p.add_argument("--threshold", type=float, default=-70.0, help="raster detection threshold in dBm")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="Monte Carlo sample count")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", type=Path, default=None, help="measure file to write")
    p.add_argument("--jobs", type=int, default=jobs_default, help="worker threads")

    p = sub.add_parser("solve", help="expected reports to knowledge, spectrum and bounds",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("measure", type=Path, help="tile measure JSON file")
    _add_stop(p)
    p.add_argument("--epsilon", type=float, default=0.1, help="tolerance ε for S(1-ε)")
    p.add_argument("--out", type=Path, default=None, help="write the full solution as JSON")

    p = sub.add_parser("simulate", help="Monte Carlo trajectories under a mobility model",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("model", choices=["teleport", "walk"])
    p.add_argument("--measure", type=Path, default=None, help="tile measure file (teleport; optional for walk)")
    _add_scenario_source(p, 50.0, "random scenario: disc radius in metres")
    p.add_argument("--trajectories", type=int, default=None,
                   help="trajectory count (default: 100000 teleport, 200 walk)")
    p.add_argument("--grid-step", type=float, default=2.5, help="walk lattice step in metres")
    p.add_argument("--step-period", type=float, default=5.0, help="seconds between walk steps")
    p.add_argument("--inter-report", type=float, default=360.0, help="seconds between reports")
    p.add_argument("--samples", type=int, default=100_000, help="tessellation samples when no measure is given")
    p.add_argument("--max-reports", type=int, default=10_000_000, help="per-trajectory report cap")
    _add_stop(p)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", type=Path, default=None, help="trajectory records CSV")

    p = sub.add_parser("experiment", help="batch experiments",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("kind", choices=["ensemble", "walk-sweep", "delta-sweep", "threshold-sweep"])
    p.add_argument("--configs", type=int, default=350, help="ensemble: scenario count")
    _add_scenario_source(p, None, "disc radius in metres (default: 1.0 for ensemble, 50.0 for walk-sweep)")
    p.add_argument("--delta", type=float, default=0.9, help="δ for ensemble and walk-sweep")
    p.add_argument("--epsilon", type=float, default=0.1, help="ε for S(1-ε)")
    p.add_argument("--samples", type=int, default=100_000, help="tessellation samples per scenario")
    p.add_argument("--inter-report", type=float, default=1.0, help="ensemble: seconds per report")
    p.add_argument("--periods", type=_floats, default=[360.0, 1800.0, 3600.0, 7200.0],
                   help="walk-sweep: comma-separated inter-report periods in seconds")
    p.add_argument("--grid-step", type=float, default=2.5, help="walk-sweep lattice step in metres")
    p.add_argument("--step-period", type=float, default=5.0, help="walk-sweep seconds between steps")
    p.add_argument("--trajectories", type=int, default=200, help="walk-sweep trajectories per period")
    p.add_argument("--measure", type=Path, default=None, help="delta-sweep: tile measure file")
    p.add_argument("--deltas", type=_floats, default=[round(0.05 * i, 2) for i in range(1, 21)],
                   help="delta-sweep: comma-separated δ values")
    p.add_argument("--raster", type=Path, default=None,
                   help="threshold-sweep: power-map file (default: built-in synthetic map)")
    p.add_argument("--thresholds", type=_floats, default=[-60.0 - 5 * i for i in range(9)],
                   help="threshold-sweep: comma-separated dBm thresholds")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--jobs", type=int, default=jobs_default, help="worker threads")

    p = sub.add_parser("synth-raster", help="write the synthetic 4-station power map",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("out", type=Path, help="raster file to write")
    p.add_argument("--seed", type=int, default=0, help="shadowing seed")
    return parser


def _tessellate(args) -> int:
    sources = sum(x is not None for x in (args.scenario, args.random, args.raster))
    if sources != 1:
        print("tessellate: give exactly one of a scenario file, --random or --raster", file=sys.stderr)
        return EXIT_USAGE
    if args.random is not None:
        try:
            n, radius, seed = int(args.random[0]), float(args.random[1]), int(args.random[2])
        except ValueError:
            print("tessellate: --random expects N RADIUS SEED", file=sys.stderr)
            return EXIT_USAGE
        scenario = generate_random_scenario(n, radius, seed)
    elif args.raster is not None:
        scenario = load_raster_scenario(args.raster, args.threshold)
    else:
        scenario = load_scenario(args.scenario)
    measure = estimate_tessellation(scenario, args.samples, args.seed, jobs=args.jobs)
    if args.out is not None:
        save_measure(measure, args.out)
    print(f"{'tile':<24}{'mass':>12}{'std_err':>12}")
    for k in bits.state_order(measure.n_neighbours):
        label = "{" + ",".join(map(str, bits.members(int(k)))) + "}"
        print(f"{label:<24}{measure.mass[k]:>12.6f}{measure.std_err[k]:>12.6f}")
    worst = float(measure.std_err.max())
    if worst > HIGH_STD_ERR:
        print(f"warning: largest tile std_err {worst:.4f} exceeds {HIGH_STD_ERR}; raise --samples",
              file=sys.stderr)
    return 0


def _solve(args) -> int:
    measure = load_measure(args.measure)
    sol = chain.solve_fk(measure) if args.delta is None else chain.solve_delta(measure, args.delta)
    bound = chain.report_bound(sol.second_largest, args.epsilon)
    target = "full knowledge" if args.delta is None else f"{args.delta}-knowledge"
    var = sol.variance[0] if sol.reachable[0] else chain.UNREACHABLE
    print(f"target: {target}")
    print(f"expected_reports: {_fmt(sol.mean)}")
    print(f"variance: {_fmt(var)}")
    print(f"second_largest_eigenvalue: {sol.second_largest:.6f}")
    print(f"S(1-{args.epsilon}): {_fmt(bound)}")
    if args.delta is None:
        ok, missing = chain.fk_reachable(measure)
        if not ok:
            print(f"undiscoverable neighbours: {missing}")
    if args.out is not None:
        args.out.write_text(json.dumps(sol.to_json(epsilons=(args.epsilon,)), allow_nan=False) + "\n")
    return 0


def _simulate(args) -> int:
    if args.model == "teleport":
        if args.measure is None:
            print("simulate teleport: --measure is required", file=sys.stderr)
            return EXIT_USAGE
        measure = load_measure(args.measure)
        if args.delta is None and not chain.fk_reachable(measure)[0]:
            print("simulate: full knowledge is unreachable for this measure", file=sys.stderr)
            return EXIT_DEGENERATE
        n = args.trajectories or 100_000
        batch = teleport_batch(measure, n, args.seed, delta=args.delta, max_reports=args.max_reports)
        unit = "reports"
    else:
        scenario = _scenario_from(args)
        measure = (load_measure(args.measure) if args.measure is not None
                   else estimate_tessellation(scenario, args.samples, child(args.seed, 0)))
        if measure.n_neighbours != scenario.n_neighbours:
            print("simulate walk: measure and scenario disagree on neighbour count", file=sys.stderr)
            return EXIT_INPUT
        delta = 0.9 if args.delta is None and not args.fk else args.delta
        if delta is None and not chain.fk_reachable(measure)[0]:
            print("simulate: full knowledge is unreachable for this measure", file=sys.stderr)
            return EXIT_DEGENERATE
        cfg = WalkConfig(grid_step=args.grid_step, step_period=args.step_period,
                         inter_report_time=args.inter_report)
        n = args.trajectories or 200
        batch = walk_batch(scenario, cfg, measure, n, child(args.seed, 1), delta=delta,
                           max_reports=args.max_reports)
        unit = "reports"
    if args.out is not None:
        args.out.write_text(batch.to_csv())
    done = int((~batch.timed_out).sum())
    print(f"trajectories: {batch.n} (timeouts: {batch.n - done})")
    if done:
        print(f"mean {unit}: {batch.mean_reports:.4f} ± {batch.se_reports:.4f} (1 s.e.)")
        if args.model == "walk":
            print(f"mean hours: {batch.mean_wall_time / 3600:.4f}")
    return 0


def _experiment(args) -> int:
    if args.kind == "ensemble":
        result = run_random_ensemble(args.configs, args.neighbours, args.delta, args.epsilon, args.seed,
                                     radius=args.radius or 1.0, n_samples=args.samples,
                                     inter_report_time=args.inter_report, jobs=args.jobs)
    elif args.kind == "walk-sweep":
        args.radius = args.radius or 50.0
        result = run_walk_vs_teleport(_scenario_from(args), args.periods, args.delta, args.trajectories,
                                      args.seed, grid_step=args.grid_step, step_period=args.step_period,
                                      epsilon=args.epsilon, n_samples=args.samples)
    elif args.kind == "delta-sweep":
        if args.measure is None:
            print("experiment delta-sweep: --measure is required", file=sys.stderr)
            return EXIT_USAGE
        result = run_delta_sweep(load_measure(args.measure), args.deltas)
    else:
        raster = args.raster
        if raster is None:
            args.out.mkdir(parents=True, exist_ok=True)
            raster = args.out / "synthetic_raster.txt"
            write_power_map(synthetic_power_map(0), raster)
        result = run_threshold_sweep(raster, args.thresholds, args.seed, n_samples=args.samples)
    rec_path, sum_path = result.write(args.out)
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    print(f"records: {rec_path}")
    print(f"summary: {sum_path}")
    return 0


def _synth_raster(args) -> int:
    write_power_map(synthetic_power_map(args.seed), args.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"tessellate": _tessellate, "solve": _solve, "simulate": _simulate,
               "experiment": _experiment, "synth-raster": _synth_raster}[args.command]
    try:
        return handler(args)
    except DegenerateScenarioError as exc:
        print(f"degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ScenarioError, MeasureError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
