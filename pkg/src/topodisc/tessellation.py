"""Monte Carlo estimation of tile measures over the serving coverage area."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bits
from .seeding import children
from .scenario import Disc, Point2D, Raster, Scenario

OUTSIDE = -1
DEFAULT_SAMPLES = 1_000_000
CHUNK = 1 << 17
SUM_TOL = 1e-9


class MeasureError(ValueError):
    """Invalid tile measure (wrong length, negative or unnormalised mass)."""


class DegenerateScenarioError(ValueError):
    """Serving region has no area to sample from."""


@dataclass(frozen=True, eq=False)
class TileMeasure:
    """Normalised areas of the ``2**n`` tiles, indexed by neighbour mask.

    ``mass[0]`` is the part of the serving area no neighbour covers.
    ``sample_count`` is 0 for exact or hand-written measures.
    """

    n_neighbours: int
    mass: np.ndarray
    sample_count: int = 0
    std_err: np.ndarray | None = None

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.shape != (1 << self.n_neighbours,):
            raise MeasureError(f"mass must have {1 << self.n_neighbours} entries, got shape {mass.shape}")
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise MeasureError("tile masses must be finite and non-negative")
        total = mass.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise MeasureError(f"tile masses sum to {total!r}, expected 1")
        mass = mass / total
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)
        if self.std_err is not None:
            se = np.array(self.std_err, dtype=float)
            if se.shape != mass.shape:
                raise MeasureError("std_err must match mass")
            se.setflags(write=False)
            object.__setattr__(self, "std_err", se)

    @classmethod
    def from_tiles(cls, n_neighbours: int, tiles: dict) -> TileMeasure:
        """Build from ``{mask: mass}``; absent tiles get zero mass."""
        mass = np.zeros(1 << n_neighbours)
        for mask, value in tiles.items():
            mass[mask] = value
        return cls(n_neighbours, mass)

    @property
    def full(self) -> int:
        return bits.full(self.n_neighbours)

    def __eq__(self, other):
        if not isinstance(other, TileMeasure):
            return NotImplemented
        return (self.n_neighbours == other.n_neighbours
                and self.sample_count == other.sample_count
                and np.array_equal(self.mass, other.mass))

    __hash__ = None

    def to_json(self) -> dict:
        doc = {"n_neighbours": self.n_neighbours, "mass": self.mass.tolist(),
               "sample_count": self.sample_count}
        if self.std_err is not None:
            doc["std_err"] = self.std_err.tolist()
        return doc

    @classmethod
    def from_json(cls, doc) -> TileMeasure:
        if not isinstance(doc, dict):
            raise MeasureError("measure: expected a JSON object")
        for key in ("n_neighbours", "mass"):
            if key not in doc:
                raise MeasureError(f"measure: missing field '{key}'")
        return cls(int(doc["n_neighbours"]), doc["mass"], int(doc.get("sample_count", 0)),
                   doc.get("std_err"))


def save_measure(measure: TileMeasure, path) -> None:
    Path(path).write_text(json.dumps(measure.to_json()) + "\n")


def load_measure(path) -> TileMeasure:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeasureError(f"{path}: not valid JSON ({exc})") from None
    return TileMeasure.from_json(doc)


def classify_points(scenario: Scenario, xs, ys) -> np.ndarray:
    """Tile mask for each point, or ``OUTSIDE`` where the serving region misses it."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    tiles = np.zeros(xs.shape, dtype=np.int64)
    for i, region in enumerate(scenario.neighbours):
        tiles |= region.covers(xs, ys).astype(np.int64) << i
    tiles[~scenario.serving.covers(xs, ys)] = OUTSIDE
    return tiles


def classify_point(scenario: Scenario, p: Point2D) -> int:
    return int(classify_points(scenario, [p[0]], [p[1]])[0])


def _sample_disc(disc: Disc, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # rejection from the bounding square
    xs, ys = [], []
    have = 0
    while have < count:
        draw = int((count - have) * 1.3) + 64
        u = rng.uniform(-1.0, 1.0, size=(2, draw))
        keep = u[0] ** 2 + u[1] ** 2 <= 1.0
        xs.append(u[0, keep])
        ys.append(u[1, keep])
        have += int(keep.sum())
    x = np.concatenate(xs)[:count] * disc.radius + disc.center.x
    y = np.concatenate(ys)[:count] * disc.radius + disc.center.y
    return x, y


def _sample_raster(raster: Raster, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(raster.mask)
    pick = rng.integers(0, rows.size, size=count)
    x0, y0 = raster.cell_center(rows[pick], cols[pick])
    off = rng.uniform(-0.5, 0.5, size=(2, count)) * raster.cell_size
    return x0 + off[0], y0 + off[1]


def sample_serving(scenario: Scenario, count: int, rng: np.random.Generator):
    serving = scenario.serving
    if isinstance(serving, Disc):
        return _sample_disc(serving, count, rng)
    return _sample_raster(serving, count, rng)


def _count_chunk(scenario: Scenario, count: int, seed_seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    xs, ys = sample_serving(scenario, count, rng)
    tiles = classify_points(scenario, xs, ys)
    # sampled points can land a hair outside a raster cell's closed edge only via
    # rounding; they are dropped rather than miscounted
    tiles = tiles[tiles != OUTSIDE]
    return np.bincount(tiles, minlength=1 << scenario.n_neighbours)


def estimate_tessellation(scenario: Scenario, n_samples: int = DEFAULT_SAMPLES, seed=0,
                          jobs: int = 1) -> TileMeasure:
    """Empirical tile frequencies from points uniform over the serving region.

    Samples are drawn in fixed-size chunks, each from its own spawned seed,
    so the result depends on ``seed`` and ``n_samples`` but not on ``jobs``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if isinstance(scenario.serving, Raster) and not scenario.serving.mask.any():
        raise DegenerateScenarioError("serving raster has no covered cell")
    n_chunks = math.ceil(n_samples / CHUNK)
    sizes = [CHUNK] * (n_chunks - 1) + [n_samples - CHUNK * (n_chunks - 1)]
    seeds = children(seed, n_chunks)
    if jobs > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda a: _count_chunk(scenario, *a), zip(sizes, seeds)))
    else:
        parts = [_count_chunk(scenario, c, s) for c, s in zip(sizes, seeds)]
    counts = np.sum(parts, axis=0)
    used = int(counts.sum())
    if used == 0:
        raise DegenerateScenarioError("no sample fell inside the serving region")
    p = counts / used
    se = np.sqrt(p * (1.0 - p) / used)
    return TileMeasure(scenario.n_neighbours, p, used, se)


def coverage_fraction(measure: TileMeasure, k: int) -> float:
    """Share of the serving area whose tiles only name neighbours in ``k``."""
    return float(sum(measure.mass[sub] for sub in bits.iter_subsets(k)))
