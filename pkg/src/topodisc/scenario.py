"""Coverage geometry: discs, raster power maps and scenario files."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .seeding import seed_sequence

DEFAULT_CAP = 20


class ScenarioError(ValueError):
    """Malformed scenario or raster input."""


class CapacityError(ScenarioError):
    """More neighbours than the configured cap."""


class Point2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Disc:
    center: Point2D
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", Point2D(float(self.center[0]), float(self.center[1])))
        if not math.isfinite(self.center.x) or not math.isfinite(self.center.y):
            raise ScenarioError("disc center must be finite")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ScenarioError(f"radius must be > 0, got {self.radius}")

    def covers(self, xs, ys) -> np.ndarray:
        dx = np.asarray(xs, dtype=float) - self.center.x
        dy = np.asarray(ys, dtype=float) - self.center.y
        return dx * dx + dy * dy <= self.radius * self.radius

    def bounds(self) -> tuple[float, float, float, float]:
        c, r = self.center, self.radius
        return c.x - r, c.y - r, c.x + r, c.y + r

    @property
    def area(self) -> float:
        return math.pi * self.radius**2


@dataclass(frozen=True, eq=False)
class Raster:
    """Received-power grid thresholded into a coverage mask.

    ``origin`` is the south-west corner of the grid and row 0 is the
    northernmost row, so row ``r`` spans
    ``y ∈ [oy + (n_rows - 1 - r)·cell, oy + (n_rows - r)·cell)``.
    """

    origin: Point2D
    cell_size: float
    power: np.ndarray
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "origin", Point2D(float(self.origin[0]), float(self.origin[1])))
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ScenarioError(f"cell_size must be > 0, got {self.cell_size}")
        power = np.array(self.power, dtype=float)
        if power.ndim != 2 or power.shape[0] < 1 or power.shape[1] < 1:
            raise ScenarioError(f"power must be a non-empty 2-D grid, got shape {power.shape}")
        power.setflags(write=False)
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def n_rows(self) -> int:
        return self.power.shape[0]

    @property
    def n_cols(self) -> int:
        return self.power.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.power >= self.threshold

    def with_threshold(self, threshold: float) -> Raster:
        return Raster(self.origin, self.cell_size, self.power, threshold)

    def cell_index(self, xs, ys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(row, col, inside) for each point; row/col are only valid where inside."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        col = np.floor((xs - self.origin.x) / self.cell_size).astype(np.int64)
        row_from_south = np.floor((ys - self.origin.y) / self.cell_size).astype(np.int64)
        inside = (col >= 0) & (col < self.n_cols) & (row_from_south >= 0) & (row_from_south < self.n_rows)
        row = self.n_rows - 1 - row_from_south
        return row, col, inside

    def covers(self, xs, ys) -> np.ndarray:
        row, col, inside = self.cell_index(xs, ys)
        out = np.zeros(np.shape(inside), dtype=bool)
        out[inside] = self.mask[row[inside], col[inside]]
        return out

    def bounds(self) -> tuple[float, float, float, float]:
        o = self.origin
        return o.x, o.y, o.x + self.n_cols * self.cell_size, o.y + self.n_rows * self.cell_size

    @property
    def area(self) -> float:
        return float(self.mask.sum()) * self.cell_size**2

    def cell_center(self, row, col) -> tuple[np.ndarray, np.ndarray]:
        x = self.origin.x + (np.asarray(col) + 0.5) * self.cell_size
        y = self.origin.y + (self.n_rows - np.asarray(row) - 0.5) * self.cell_size
        return x, y

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.cell_size == other.cell_size
            and self.threshold == other.threshold
            and np.array_equal(self.power, other.power)
        )

    __hash__ = None


CoverageRegion = Union[Disc, Raster]


def contains(region: CoverageRegion, p: Point2D) -> bool:
    """Closed membership test: distance <= radius, or power >= threshold."""
    return bool(region.covers(p[0], p[1]))


@dataclass(frozen=True)
class Scenario:
    serving: CoverageRegion
    neighbours: tuple[CoverageRegion, ...] = ()
    labels: tuple[str, ...] | None = None
    cap: int = field(default=DEFAULT_CAP, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "neighbours", tuple(self.neighbours))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
            if len(self.labels) != len(self.neighbours) + 1:
                raise ScenarioError("labels must name the serving station and every neighbour")
        if len(self.neighbours) > self.cap:
            raise CapacityError(f"{len(self.neighbours)} neighbours exceeds the cap of {self.cap}")

    @property
    def n_neighbours(self) -> int:
        return len(self.neighbours)


def generate_random_scenario(n_neighbours: int, radius: float, seed, cap: int = DEFAULT_CAP) -> Scenario:
    """Serving disc at the origin plus ``n_neighbours`` equal discs that overlap it.

    Neighbour centres are uniform over the disc of radius ``2·radius`` around
    the origin; draws that do not intersect the serving disc (distance exactly
    ``2·radius``) are redrawn.
    """
    if n_neighbours < 1:
        raise ValueError("n_neighbours must be >= 1")
    if not radius > 0:
        raise ValueError("radius must be > 0")
    rng = np.random.default_rng(seed_sequence(seed))
    reach = 2.0 * radius
    centres = []
    while len(centres) < n_neighbours:
        x, y = rng.uniform(-reach, reach, size=2)
        if x * x + y * y < reach * reach:
            centres.append(Point2D(float(x), float(y)))
    return Scenario(
        serving=Disc(Point2D(0.0, 0.0), radius),
        neighbours=tuple(Disc(c, radius) for c in centres),
        cap=cap,
    )


# -- JSON scenario files -----------------------------------------------------

def _region_to_json(region: CoverageRegion) -> dict:
    if isinstance(region, Disc):
        return {"type": "disc", "center": [region.center.x, region.center.y], "radius": region.radius}
    return {
        "type": "raster",
        "origin": [region.origin.x, region.origin.y],
        "cell_size": region.cell_size,
        "n_cols": region.n_cols,
        "n_rows": region.n_rows,
        "threshold": region.threshold,
        "power": region.power.tolist(),
    }


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ScenarioError(f"{where}: missing field '{key}'")
    return obj[key]


def _point(value, where: str) -> Point2D:
    try:
        x, y = value
        p = Point2D(float(x), float(y))
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected [x, y], got {value!r}") from None
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise ScenarioError(f"{where}: coordinates must be finite")
    return p


def _region_from_json(obj, where: str) -> CoverageRegion:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    kind = _require(obj, "type", where)
    try:
        if kind == "disc":
            center = _point(_require(obj, "center", where), f"{where}.center")
            radius = _require(obj, "radius", where)
            if not isinstance(radius, (int, float)) or not radius > 0:
                raise ScenarioError(f"{where}.radius: must be a number > 0, got {radius!r}")
            return Disc(center, float(radius))
        if kind == "raster":
            origin = _point(_require(obj, "origin", where), f"{where}.origin")
            n_cols = int(_require(obj, "n_cols", where))
            n_rows = int(_require(obj, "n_rows", where))
            power = np.array(_require(obj, "power", where), dtype=float)
            if power.shape != (n_rows, n_cols):
                raise ScenarioError(
                    f"{where}.power: shape {power.shape} does not match n_rows={n_rows}, n_cols={n_cols}"
                )
            return Raster(origin, float(_require(obj, "cell_size", where)), power,
                          float(_require(obj, "threshold", where)))
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None
    raise ScenarioError(f"{where}.type: unknown region type {kind!r}")


def scenario_to_json(scenario: Scenario) -> dict:
    doc = {
        "serving": _region_to_json(scenario.serving),
        "neighbours": [_region_to_json(r) for r in scenario.neighbours],
    }
    if scenario.labels is not None:
        doc["labels"] = list(scenario.labels)
    return doc


def scenario_from_json(doc, cap: int = DEFAULT_CAP) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: expected a JSON object")
    serving = _region_from_json(_require(doc, "serving", "scenario"), "serving")
    raw = _require(doc, "neighbours", "scenario")
    if not isinstance(raw, list):
        raise ScenarioError("neighbours: expected a list")
    if len(raw) > cap:
        raise CapacityError(f"{len(raw)} neighbours exceeds the cap of {cap}")
    neighbours = tuple(_region_from_json(r, f"neighbours[{i}]") for i, r in enumerate(raw))
    return Scenario(serving, neighbours, doc.get("labels"), cap=cap)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_json(scenario), indent=2) + "\n")


def load_scenario(path, cap: int = DEFAULT_CAP) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
    return scenario_from_json(doc, cap=cap)


# -- raster power-map files --------------------------------------------------

@dataclass(frozen=True, eq=False)
class PowerMap:
    """Per-station received power grids sharing one geometry (dBm)."""

    origin: Point2D
    cell_size: float
    labels: tuple[str, ...]
    grids: tuple[np.ndarray, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.grids[0].shape


_HEADER_KEYS = ("ncols", "nrows", "cellsize", "origin", "nstations")


def read_power_map(path) -> PowerMap:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ScenarioError(f"{path}: empty raster file")
    tokens = lines[0].split()
    header = {}
    i = 0
    while i < len(tokens):
        key = tokens[i]
        width = 2 if key == "origin" else 1
        header[key] = tokens[i + 1:i + 1 + width]
        i += 1 + width
    for key in _HEADER_KEYS:
        if key not in header or len(header[key]) != (2 if key == "origin" else 1):
            raise ScenarioError(f"{path}: header missing field '{key}'")
    try:
        ncols = int(header["ncols"][0])
        nrows = int(header["nrows"][0])
        cellsize = float(header["cellsize"][0])
        origin = Point2D(float(header["origin"][0]), float(header["origin"][1]))
        nstations = int(header["nstations"][0])
    except ValueError as exc:
        raise ScenarioError(f"{path}: bad header value ({exc})") from None
    if ncols < 1 or nrows < 1 or nstations < 1:
        raise ScenarioError(f"{path}: ncols, nrows and nstations must be positive")

    labels, grids = [], []
    pos = 1
    for s in range(nstations):
        if pos >= len(lines) or not lines[pos].startswith("station"):
            raise ScenarioError(f"{path}: expected 'station <label>' for station {s}")
        labels.append(lines[pos].split(None, 1)[1] if len(lines[pos].split()) > 1 else str(s))
        rows = lines[pos + 1:pos + 1 + nrows]
        pos += 1 + nrows
        try:
            grid = np.array([[float(v) for v in row.split()] for row in rows], dtype=float)
        except ValueError as exc:
            raise ScenarioError(f"{path}: station {labels[-1]}: {exc}") from None
        if grid.shape != (nrows, ncols):
            raise ScenarioError(
                f"{path}: station {labels[-1]} grid has shape {grid.shape}, header says ({nrows}, {ncols})"
            )
        grids.append(grid)
    return PowerMap(origin, cellsize, tuple(labels), tuple(grids))


def write_power_map(power_map: PowerMap, path) -> None:
    nrows, ncols = power_map.shape
    o = power_map.origin
    out = [f"ncols {ncols} nrows {nrows} cellsize {power_map.cell_size!r} "
           f"origin {o.x!r} {o.y!r} nstations {len(power_map.grids)}"]
    for label, grid in zip(power_map.labels, power_map.grids):
        out.append(f"station {label}")
        out.extend(" ".join(repr(float(v)) for v in row) for row in grid)
    Path(path).write_text("\n".join(out) + "\n")


def raster_scenario(power_map: PowerMap, threshold: float, cap: int = DEFAULT_CAP) -> Scenario:
    """First station serves; every grid is thresholded at ``threshold``."""
    regions = [Raster(power_map.origin, power_map.cell_size, g, threshold) for g in power_map.grids]
    return Scenario(regions[0], tuple(regions[1:]), power_map.labels, cap=cap)


def load_raster_scenario(path, threshold: float, cap: int = DEFAULT_CAP) -> Scenario:
    return raster_scenario(read_power_map(path), threshold, cap=cap)


def synthetic_power_map(seed=0) -> PowerMap:
    """A 4-station indoor map: a macrocell plus three femtocells.

    Power falls off with a log-distance law (34 mW at 2.1 GHz, exponent
    4), interior walls every 20 m cost 6 dB each, and a smoothed
    log-normal shadowing field adds spatial texture.  The macrocell stays
    above -55 dBm everywhere so it covers the whole floor at every threshold
    in the -60 to -100 dBm range.
    """
    rng = np.random.default_rng(seed)
    cell = 2.0
    ncols, nrows = 100, 50
    xs = (np.arange(ncols) + 0.5) * cell
    ys = (nrows - np.arange(nrows) - 0.5) * cell
    X, Y = np.meshgrid(xs, ys)

    def shadow(sigma):
        noise = rng.normal(0.0, 1.0, size=(nrows + 8, ncols + 8))
        kernel = np.ones(9) / 9.0
        noise = np.apply_along_axis(np.convolve, 0, noise, kernel, "valid")
        noise = np.apply_along_axis(np.convolve, 1, noise, kernel, "valid")
        return sigma * noise / noise.std()

    tx_dbm = 10 * math.log10(34.0)
    fspl_1m = 20 * math.log10(4 * math.pi * 2.1e9 / 3e8)
    femtos = [(30.0, 70.0), (95.0, 25.0), (170.0, 60.0)]
    grids = [np.clip(-48.0 + shadow(2.0), -55.0, None)]
    for fx, fy in femtos:
        d = np.maximum(np.hypot(X - fx, Y - fy), 1.0)
        walls = np.abs(np.floor(X / 20.0) - math.floor(fx / 20.0))
        grids.append(tx_dbm - fspl_1m - 40.0 * np.log10(d) - 6.0 * walls + shadow(4.0))
    return PowerMap(Point2D(0.0, 0.0), cell, ("macro", "femto1", "femto2", "femto3"),
                    tuple(np.round(g, 2) for g in grids))
