"""Report streams from mobility models, and knowledge-trajectory simulation."""
from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import chain
from .scenario import Disc, Scenario
from .seeding import seed_sequence
from .tessellation import TileMeasure, classify_points

MAX_REPORTS = 10_000_000


class Report(NamedTuple):
    time: float
    tile: int


@dataclass(frozen=True)
class WalkConfig:
    grid_step: float = 2.5
    step_period: float = 5.0
    inter_report_time: float = 360.0
    boundary: str = "reflective"
    neighbourhood: int = 4

    def __post_init__(self):
        for name in ("grid_step", "step_period", "inter_report_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.inter_report_time < self.step_period:
            raise ValueError("inter_report_time must be >= step_period")
        if self.boundary != "reflective" or self.neighbourhood != 4:
            raise ValueError("only the reflective 4-neighbour walk is implemented")

    @property
    def steps_per_report(self) -> int:
        return max(1, int(round(self.inter_report_time / self.step_period)))


@dataclass(frozen=True)
class PoissonUsers:
    n_users: int
    report_prob: float

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if not 0 < self.report_prob <= 1:
            raise ValueError("report_prob must be in (0, 1]")

    @property
    def rate(self) -> float:
        return self.n_users * self.report_prob


def poisson_wallclock(mean_reports: float, users: PoissonUsers) -> float:
    """Expected time for a rate ``n·p`` Poisson process to deliver ``mean_reports`` reports."""
    if mean_reports < 0:
        raise ValueError("mean_reports must be >= 0")
    return mean_reports / users.rate


# -- teleport model ----------------------------------------------------------

def _tile_sampler(measure: TileMeasure):
    cdf = np.cumsum(measure.mass)
    last = measure.mass.shape[0] - 1

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), last)

    return draw


def teleport_stream(measure: TileMeasure, seed, period: float = 1.0, chunk: int = 4096) -> Iterator[Report]:
    """Endless i.i.d. tile reports, one every ``period``, first at ``t = period``."""
    rng = np.random.default_rng(seed_sequence(seed))
    draw = _tile_sampler(measure)
    t = 0
    while True:
        for tile in draw(rng, chunk).tolist():
            t += 1
            yield Report(t * period, tile)


# -- random walk on a lattice ------------------------------------------------

_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True, eq=False)
class WalkLattice:
    """In-region lattice sites, their tiles, and the 4-neighbour move table.

    ``moves[d, i]`` is the site reached from ``i`` in direction ``d``; a move
    that would leave the serving region reflects back onto ``i``.
    """

    xs: np.ndarray
    ys: np.ndarray
    tiles: np.ndarray
    moves: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.xs.shape[0]


def build_lattice(scenario: Scenario, grid_step: float) -> WalkLattice:
    serving = scenario.serving
    x0, y0, x1, y1 = serving.bounds()
    if isinstance(serving, Disc):
        ax, ay = serving.center
    else:
        ax, ay = x0 + grid_step / 2, y0 + grid_step / 2
    i_lo, i_hi = math.floor((x0 - ax) / grid_step), math.ceil((x1 - ax) / grid_step)
    j_lo, j_hi = math.floor((y0 - ay) / grid_step), math.ceil((y1 - ay) / grid_step)
    I, J = np.meshgrid(np.arange(i_lo, i_hi + 1), np.arange(j_lo, j_hi + 1), indexing="ij")
    gx = ax + I * grid_step
    gy = ay + J * grid_step
    inside = serving.covers(gx, gy)
    if not inside.any():
        raise ValueError("serving region contains no lattice site")
    index = np.full(inside.shape, -1, dtype=np.int64)
    index[inside] = np.arange(int(inside.sum()))
    si, sj = np.nonzero(inside)
    moves = np.empty((4, si.size), dtype=np.int64)
    own = index[si, sj]
    for d, (di, dj) in enumerate(_MOVES):
        ni, nj = si + di, sj + dj
        ok = (ni >= 0) & (ni < inside.shape[0]) & (nj >= 0) & (nj < inside.shape[1])
        target = np.full(si.size, -1, dtype=np.int64)
        target[ok] = index[ni[ok], nj[ok]]
        moves[d] = np.where(target >= 0, target, own)
    xs, ys = gx[inside], gy[inside]
    return WalkLattice(xs, ys, classify_points(scenario, xs, ys), moves)


def random_walk_stream(scenario: Scenario, cfg: WalkConfig, seed,
                       lattice: WalkLattice | None = None) -> Iterator[Report]:
    """Reports from one walker, every ``cfg.inter_report_time`` seconds.

    The walker starts on a uniformly chosen site and every ``step_period``
    picks one of four directions uniformly; blocked moves leave it in place.
    """
    lat = lattice if lattice is not None else build_lattice(scenario, cfg.grid_step)
    rng = np.random.default_rng(seed_sequence(seed))
    pos = int(rng.integers(lat.n_sites))
    steps = cfg.steps_per_report
    r = 0
    while True:
        for d in rng.integers(4, size=steps).tolist():
            pos = lat.moves[d, pos]
        r += 1
        yield Report(r * cfg.inter_report_time, int(lat.tiles[pos]))


# -- folding reports into knowledge ------------------------------------------

@dataclass(frozen=True)
class SimulationResult:
    reports_used: int
    wall_time: float
    state: int
    timed_out: bool = False


def simulate_until(stream: Iterable[Report], measure: TileMeasure, delta: float | None = None,
                   max_reports: int = MAX_REPORTS) -> SimulationResult:
    """Consume reports until knowledge is absorbing (FK, or δ-knowledge if ``delta`` given)."""
    if delta is None:
        ok, missing = chain.fk_reachable(measure)
        if not ok:
            raise ValueError(f"full knowledge unreachable: neighbours {missing} are undiscoverable")
    absorbing = chain.absorbing_states(measure, delta)
    state = 0
    if absorbing[state]:
        return SimulationResult(0, 0.0, state)
    used = 0
    now = 0.0
    for report in stream:
        used += 1
        now = report.time
        state |= report.tile
        if absorbing[state]:
            return SimulationResult(used, now, state)
        if used >= max_reports:
            break
    return SimulationResult(used, now, state, timed_out=True)


def empirical_report_measure(stream: Iterable[Report], horizon: int, n_neighbours: int) -> TileMeasure:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    counts = np.zeros(1 << n_neighbours, dtype=np.int64)
    for i, report in enumerate(stream):
        if i >= horizon:
            break
        counts[report.tile] += 1
    return TileMeasure(n_neighbours, counts / horizon, sample_count=horizon)


# -- vectorised trajectory batches -------------------------------------------

@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Outcome of many independent trajectories run side by side."""

    seed: int
    reports_used: np.ndarray
    wall_time: np.ndarray
    terminal_state: np.ndarray
    timed_out: np.ndarray

    @property
    def n(self) -> int:
        return self.reports_used.shape[0]

    def _done(self) -> np.ndarray:
        return self.reports_used[~self.timed_out].astype(float)

    @property
    def mean_reports(self) -> float:
        return float(self._done().mean())

    @property
    def se_reports(self) -> float:
        done = self._done()
        return float(done.std(ddof=1) / math.sqrt(done.size)) if done.size > 1 else math.nan

    @property
    def mean_wall_time(self) -> float:
        return float(self.wall_time[~self.timed_out].mean())

    def survival(self, t_max: int) -> np.ndarray:
        """Empirical P(τ > t) for t = 0..t_max (timeouts count as survivors)."""
        used = np.where(self.timed_out, np.iinfo(np.int64).max, self.reports_used)
        t = np.arange(t_max + 1)
        return (used[None, :] > t[:, None]).mean(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "trajectory", "reports_used", "wall_time", "terminal_state", "timed_out"])
        for i in range(self.n):
            w.writerow([self.seed, i, int(self.reports_used[i]), repr(float(self.wall_time[i])),
                        int(self.terminal_state[i]), int(self.timed_out[i])])
        return buf.getvalue()


def _seed_label(seed) -> int:
    ss = seed_sequence(seed)
    return int(ss.entropy) if isinstance(ss.entropy, int) else int(ss.generate_state(1)[0])


def teleport_batch(measure: TileMeasure, n_trajectories: int, seed, delta: float | None = None,
                   max_reports: int = MAX_REPORTS, period: float = 1.0) -> TrajectoryBatch:
    """``n_trajectories`` independent teleport trajectories, advanced in lockstep."""
    absorbing = chain.absorbing_states(measure, delta)
    rng = np.random.default_rng(seed_sequence(seed))
    draw = _tile_sampler(measure)
    state = np.zeros(n_trajectories, dtype=np.int64)
    used = np.zeros(n_trajectories, dtype=np.int64)
    active = np.flatnonzero(~absorbing[state])
    r = 0
    while active.size and r < max_reports:
        r += 1
        state[active] |= draw(rng, active.size)
        hit = absorbing[state[active]]
        used[active[hit]] = r
        active = active[~hit]
    timed_out = np.zeros(n_trajectories, dtype=bool)
    timed_out[active] = True
    used[active] = r
    return TrajectoryBatch(_seed_label(seed), used, used * period, state, timed_out)


def walk_batch(scenario: Scenario, cfg: WalkConfig, measure: TileMeasure, n_trajectories: int, seed,
               delta: float | None = None, max_reports: int = MAX_REPORTS,
               lattice: WalkLattice | None = None) -> TrajectoryBatch:
    """Independent random walkers; knowledge absorbs per ``measure`` and ``delta``."""
    lat = lattice if lattice is not None else build_lattice(scenario, cfg.grid_step)
    absorbing = chain.absorbing_states(measure, delta)
    rng = np.random.default_rng(seed_sequence(seed))
    pos = rng.integers(lat.n_sites, size=n_trajectories)
    state = np.zeros(n_trajectories, dtype=np.int64)
    used = np.zeros(n_trajectories, dtype=np.int64)
    active = np.flatnonzero(~absorbing[state])
    steps = cfg.steps_per_report
    r = 0
    while active.size and r < max_reports:
        r += 1
        p = pos[active]
        for d in rng.integers(4, size=(steps, active.size)):
            p = lat.moves[d, p]
        pos[active] = p
        state[active] |= lat.tiles[p]
        hit = absorbing[state[active]]
        used[active[hit]] = r
        active = active[~hit]
    timed_out = np.zeros(n_trajectories, dtype=bool)
    timed_out[active] = True
    used[active] = r
    return TrajectoryBatch(_seed_label(seed), used, used * cfg.inter_report_time, state, timed_out)
