"""Batch drivers: random ensembles, walk-vs-teleport curves, δ and threshold sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import chain
from .mobility import WalkConfig, build_lattice, walk_batch
from .scenario import Scenario, generate_random_scenario, read_power_map, raster_scenario
from .seeding import child
from .tessellation import DegenerateScenarioError, TileMeasure, estimate_tessellation

PERCENTILES = (5, 25, 50, 75, 90, 95)


@dataclass
class ExperimentResult:
    kind: str
    seed: int | None
    records: list[dict]
    summary: dict

    def records_csv(self) -> str:
        return records_to_csv(self.records)

    def write(self, out_dir) -> tuple[Path, Path]:
        """Write ``<kind>_seed<seed>.csv`` and ``<kind>_seed<seed>_summary.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{self.kind}_seed{self.seed}" if self.seed is not None else self.kind
        rec_path = out / f"{stem}.csv"
        sum_path = out / f"{stem}_summary.json"
        rec_path.write_text(self.records_csv())
        sum_path.write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return rec_path, sum_path


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def records_to_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    if records:
        w = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow({k: _cell(v) for k, v in rec.items()})
    return buf.getvalue()


def _number(v):
    return v if isinstance(v, (int, float)) and not isinstance(v, bool) else None


def distribution_summary(values) -> dict:
    """Mean, percentiles and unit-bin PMF/CDF of finite values."""
    x = np.array([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    if x.size == 0:
        return {"count": 0}
    bins = np.floor(x).astype(np.int64)
    lo = int(bins.min())
    counts = np.bincount(bins - lo)
    pmf = counts / x.size
    return {
        "count": int(x.size),
        "mean": float(x.mean()),
        "percentiles": {str(p): float(np.percentile(x, p)) for p in PERCENTILES},
        "mode_bin": lo + int(counts.argmax()),
        "pmf": {str(lo + i): float(v) for i, v in enumerate(pmf)},
        "cdf": {str(lo + i): float(v) for i, v in enumerate(np.cumsum(pmf))},
    }


# -- random-scenario ensemble ------------------------------------------------

def _ensemble_record(i, n_neighbours, radius, delta, epsilon, seed, n_samples, inter_report_time):
    scenario = generate_random_scenario(n_neighbours, radius, child(seed, i, 0))
    measure = estimate_tessellation(scenario, n_samples, child(seed, i, 1))
    sol = chain.solve_delta(measure, delta)
    mean = sol.mean
    bound = chain.report_bound(sol.second_largest, epsilon)
    reachable = mean is not chain.UNREACHABLE
    rec = {
        "config": i,
        "reachable": reachable,
        "expected_reports": mean if reachable else "unreachable",
        "bound_reports": "unbounded" if bound is chain.UNBOUNDED else bound,
        "second_largest": sol.second_largest,
    }
    rec["expected_time"] = rec["expected_reports"] * inter_report_time if reachable else "unreachable"
    rec["bound_time"] = (rec["bound_reports"] * inter_report_time
                         if bound is not chain.UNBOUNDED else "unbounded")
    return rec


def summarize_ensemble(records: list[dict]) -> dict:
    """Summary computed only from the emitted records."""
    kept = [r for r in records if r["reachable"]]
    return {
        "n_configs": len(records),
        "n_excluded": len(records) - len(kept),
        "expected_reports": distribution_summary(_number(r["expected_reports"]) for r in kept),
        "bound_reports": distribution_summary(_number(r["bound_reports"]) for r in kept),
        "bound_dominates": all(
            _number(r["bound_reports"]) is None or r["bound_reports"] >= r["expected_reports"] for r in kept
        ),
    }


def run_random_ensemble(n_configs: int, n_neighbours: int, delta: float, epsilon: float, seed: int,
                        radius: float = 1.0, n_samples: int = 100_000, inter_report_time: float = 1.0,
                        jobs: int = 1) -> ExperimentResult:
    """Tessellate, solve and bound ``n_configs`` random disc scenarios."""
    if n_configs < 1:
        raise ValueError("n_configs must be >= 1")
    args = [(i, n_neighbours, radius, delta, epsilon, seed, n_samples, inter_report_time)
            for i in range(n_configs)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda a: _ensemble_record(*a), args))
    else:
        records = [_ensemble_record(*a) for a in args]
    summary = summarize_ensemble(records)
    summary.update(delta=delta, epsilon=epsilon, n_neighbours=n_neighbours, radius=radius,
                   n_samples=n_samples, seed=seed)
    return ExperimentResult("ensemble", seed, records, summary)


# -- walk versus teleport ----------------------------------------------------

def run_walk_vs_teleport(scenario: Scenario, inter_report_times, delta: float, n_trajectories: int, seed: int,
                         grid_step: float = 2.5, step_period: float = 5.0, epsilon: float = 0.1,
                         n_samples: int = 100_000, measure: TileMeasure | None = None,
                         max_reports: int = 100_000) -> ExperimentResult:
    """Mean time to δ-knowledge of a lattice walker against the teleport prediction."""
    periods = list(inter_report_times)
    if not periods:
        raise ValueError("inter_report_times must be non-empty")
    if measure is None:
        measure = estimate_tessellation(scenario, n_samples, child(seed, 0))
    sol = chain.solve_delta(measure, delta)
    teleport = sol.mean
    bound = chain.report_bound(sol.second_largest, epsilon)
    lattice = build_lattice(scenario, grid_step)
    records = []
    for i, period in enumerate(periods):
        cfg = WalkConfig(grid_step=grid_step, step_period=step_period, inter_report_time=period)
        batch = walk_batch(scenario, cfg, measure, n_trajectories, child(seed, 1, i), delta=delta,
                           max_reports=max_reports, lattice=lattice)
        done = int((~batch.timed_out).sum())
        records.append({
            "inter_report_time": float(period),
            "walk_mean_reports": batch.mean_reports if done else math.nan,
            "walk_se_reports": batch.se_reports if done > 1 else math.nan,
            "walk_mean_time": batch.mean_wall_time if done else math.nan,
            "teleport_reports": teleport,
            "teleport_time": teleport * period,
            "bound_reports": bound,
            "bound_time": bound * period,
            "timeouts": batch.n - done,
        })
    summary = {"delta": delta, "epsilon": epsilon, "n_trajectories": n_trajectories, "seed": seed,
               "teleport_reports": teleport, "bound_reports": bound,
               "second_largest": sol.second_largest, "points": len(records)}
    return ExperimentResult("walk-sweep", seed, records, summary)


# -- δ sweep -----------------------------------------------------------------

def run_delta_sweep(measure: TileMeasure, deltas) -> ExperimentResult:
    """E[τ_δ] for each δ, sorted; raises if the curve is not non-decreasing."""
    deltas = sorted(float(d) for d in deltas)
    records = []
    for d in deltas:
        sol = chain.solve_delta(measure, d)
        mean = sol.mean
        records.append({
            "delta": d,
            "expected_reports": "unreachable" if mean is chain.UNREACHABLE else mean,
            "n_absorbing": int(sol.absorbing.sum()),
        })
    values = [_number(r["expected_reports"]) for r in records]
    finite = [v for v in values if v is not None]
    if any(b < a - 1e-9 * max(1.0, abs(a)) for a, b in zip(finite, finite[1:])):
        raise RuntimeError("δ-sweep is not monotone")
    summary = {"n_neighbours": measure.n_neighbours, "points": len(records),
               "steps": len({r["n_absorbing"] for r in records})}
    return ExperimentResult("delta-sweep", None, records, summary)


# -- detection-threshold sweep -----------------------------------------------

def run_threshold_sweep(raster_path, thresholds, seed: int, n_samples: int = 100_000) -> ExperimentResult:
    """E[τ] to full knowledge for each detection threshold on one power map.

    The same seed is used at every threshold, so when the serving mask does
    not change the sample points are identical and the curve is exactly
    monotone.
    """
    power_map = read_power_map(raster_path)
    records = []
    for t in thresholds:
        rec = {"threshold": float(t), "expected_reports": "", "coverage": "", "flag": ""}
        scenario = raster_scenario(power_map, t)
        try:
            measure = estimate_tessellation(scenario, n_samples, child(seed, 0))
        except DegenerateScenarioError:
            rec["flag"] = "no_coverage"
            records.append(rec)
            continue
        sol = chain.solve_fk(measure)
        rec["coverage"] = " ".join(
            repr(float(measure.mass[[j for j in range(measure.mass.size) if j >> i & 1]].sum()))
            for i in range(measure.n_neighbours))
        if sol.mean is chain.UNREACHABLE:
            rec["expected_reports"] = "unreachable"
            rec["flag"] = "unreachable"
        else:
            rec["expected_reports"] = sol.mean
        records.append(rec)
    summary = {"seed": seed, "n_samples": n_samples, "points": len(records),
               "flagged": sum(1 for r in records if r["flag"])}
    return ExperimentResult("threshold-sweep", seed, records, summary)
