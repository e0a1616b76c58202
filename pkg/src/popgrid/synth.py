"""Deterministic synthetic cities with per-pixel ground-truth population.

The generator is a pure function of the scenario seed, driven by a Philox
counter-based RNG. Units form a rectangular partition of the (tile-snapped)
extent; built pixels cluster around smooth density bumps; POI clusters sit
on built patches and carry no residential population, so the density rule
should fire on exactly those tiles.

Pixel populations are quantized to multiples of 2**-20 persons. Sums of
such values stay exact in double precision at any realistic magnitude, so
each unit's pixel populations add up to its recorded population exactly,
independent of summation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .disaggregate import AllocationReport, allocate_uniform, run_disaggregation
from .errors import AlignmentError, GenerationError, ValidationError
from .geo import BBox, Point, TileGrid, rectangle
from .io import (
    AdminLevel,
    AdminUnit,
    BinaryRaster,
    PopulationGrid,
    Raster,
    write_admin_units,
    write_ascii_grid,
    write_poi_geojson,
)
from .poi_filter import PoiPoint, PoiSet, compute_tile_mask

__all__ = ["ScenarioSpec", "GroundTruth", "ScoreResult", "generate", "score", "write_scenario"]

_QUANTUM = 2.0**-20
_CLUSTER_DISC_RADIUS = 250.0  # all members within one default-radius buffer
_CATEGORIES = ("market", "school", "office", "mall", "clinic", "warehouse")
_PLACEMENT_ROUNDS = 20


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters for one synthetic scenario."""

    seed: int
    extent: BBox = BBox(0.0, 0.0, 3840.0, 3840.0)
    n_units: int = 12
    built_fraction_range: tuple[float, float] = (0.15, 0.55)
    n_poi_clusters: int = 3
    poi_cluster_size_range: tuple[int, int] = (5, 12)
    population_range: tuple[float, float] = (500.0, 5000.0)
    tile_size: float = 30.0
    pixel_size: float = 15.0
    n_scattered_pois: int = 0

    def __post_init__(self):
        for name in ("built_fraction_range", "poi_cluster_size_range", "population_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name} has lo > hi: ({lo}, {hi})")
        lo, hi = self.built_fraction_range
        if lo < 0 or hi > 1:
            raise ValidationError(f"built_fraction_range must lie in [0, 1]: ({lo}, {hi})")
        if self.population_range[0] < 0:
            raise ValidationError("population_range must be non-negative")
        if self.n_units < 1:
            raise ValidationError(f"n_units must be at least 1, got {self.n_units}")
        if self.n_poi_clusters < 0 or self.n_scattered_pois < 0:
            raise ValidationError("POI counts must be non-negative")
        if self.poi_cluster_size_range[0] < 1:
            raise ValidationError("POI clusters need at least one point")
        if self.tile_size <= 0 or self.pixel_size <= 0:
            raise ValidationError("tile_size and pixel_size must be positive")
        ratio = self.tile_size / self.pixel_size
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValidationError(
                f"pixel_size must divide tile_size evenly, got ratio {ratio}"
            )


@dataclass(frozen=True)
class GroundTruth:
    """A generated scenario with its exact per-pixel population."""

    spec: ScenarioSpec
    grid: TileGrid
    units: tuple[AdminUnit, ...]
    pois: PoiSet
    mask: BinaryRaster
    pixel_population: Raster
    poi_tiles: frozenset[int]  # flat tile indices holding cluster POIs

    @cached_property
    def _tile_values(self) -> np.ndarray:
        ratio = round(self.spec.tile_size / self.spec.pixel_size)
        px = self.pixel_population.values
        return px.reshape(self.grid.n_rows, ratio, self.grid.n_cols, ratio).sum(axis=(1, 3))

    def tile_population(self) -> PopulationGrid:
        return PopulationGrid(grid=self.grid, values=self._tile_values)

    def total_population(self) -> float:
        return float(sum(u.population for u in self.units))


@dataclass(frozen=True)
class ScoreResult:
    mae: float
    rmse: float
    total_error: float


def _partition(rng: np.random.Generator, n_cols: int, n_rows: int, n_units: int):
    """Guillotine split of the tile grid into n_units rectangles (c0, r0, w, h)."""
    rects = [(0, 0, n_cols, n_rows)]
    while len(rects) < n_units:
        best = -1
        best_area = 0
        for i, (_, _, w, h) in enumerate(rects):
            if (w > 1 or h > 1) and w * h > best_area:
                best = i
                best_area = w * h
        if best < 0:
            raise GenerationError(
                f"cannot partition a {n_cols}x{n_rows} tile grid into {n_units} units"
            )
        c0, r0, w, h = rects[best]
        if w >= h and w > 1:
            cut = int(rng.integers(1, w))
            pieces = [(c0, r0, cut, h), (c0 + cut, r0, w - cut, h)]
        else:
            cut = int(rng.integers(1, h))
            pieces = [(c0, r0, w, cut), (c0, r0 + cut, w, h - cut)]
        rects[best : best + 1] = pieces
    return rects


def _bump_field(rng: np.random.Generator, prows: int, pcols: int, n_bumps: int) -> np.ndarray:
    """Sum of separable circular Gaussian bumps plus uniform noise."""
    field = np.zeros((prows, pcols), dtype=np.float64)
    rr = np.arange(prows, dtype=np.float64)
    cc = np.arange(pcols, dtype=np.float64)
    min_dim = min(prows, pcols)
    for _ in range(n_bumps):
        cy = rng.uniform(0, prows)
        cx = rng.uniform(0, pcols)
        sigma = rng.uniform(max(2.0, min_dim / 10.0), max(3.0, min_dim / 3.0))
        amp = rng.uniform(0.5, 1.5)
        gy = np.exp(-((rr - cy) ** 2) / (2.0 * sigma * sigma))
        gx = np.exp(-((cc - cx) ** 2) / (2.0 * sigma * sigma))
        field += amp * np.outer(gy, gx)
    field += 0.35 * rng.random((prows, pcols))
    return field


def _place_clusters(
    rng: np.random.Generator,
    spec: ScenarioSpec,
    grid: TileGrid,
    built_tiles_per_unit: list[np.ndarray],
) -> list[PoiPoint]:
    order = sorted(
        range(len(built_tiles_per_unit)),
        key=lambda k: (-built_tiles_per_unit[k].size, k),
    )
    eligible = [k for k in order if built_tiles_per_unit[k].size > 0]
    if spec.n_poi_clusters > 0 and not eligible:
        raise GenerationError("POI clusters requested but no unit has built tiles")
    lo, hi = spec.poi_cluster_size_range
    points: list[PoiPoint] = []
    for i in range(spec.n_poi_clusters):
        unit_k = eligible[i % len(eligible)]
        tile_flat = int(rng.choice(built_tiles_per_unit[unit_k]))
        center = grid.tile_center(tile_flat % grid.n_cols, tile_flat // grid.n_cols)
        size = int(rng.integers(lo, hi + 1))
        radii = _CLUSTER_DISC_RADIUS * np.sqrt(rng.random(size))
        angles = 2.0 * math.pi * rng.random(size)
        for j in range(size):
            points.append(
                PoiPoint(
                    location=Point(
                        center.x + radii[j] * math.cos(angles[j]),
                        center.y + radii[j] * math.sin(angles[j]),
                    ),
                    category=str(rng.choice(_CATEGORIES)),
                )
            )
    return points


def generate(spec: ScenarioSpec) -> GroundTruth:
    """Build the scenario deterministically from the seed."""
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    n_cols = math.floor(spec.extent.width / spec.tile_size)
    n_rows = math.floor(spec.extent.height / spec.tile_size)
    if n_cols < 1 or n_rows < 1:
        raise GenerationError(
            f"extent {spec.extent} holds no whole {spec.tile_size} m tile"
        )
    grid = TileGrid(
        origin_x=spec.extent.min_x,
        origin_y=spec.extent.min_y,
        n_cols=n_cols,
        n_rows=n_rows,
        tile_size=spec.tile_size,
    )
    if spec.n_units > grid.n_tiles:
        raise GenerationError(f"{spec.n_units} units do not fit in {grid.n_tiles} tiles")
    if spec.built_fraction_range[1] == 0 and spec.population_range[1] > 0:
        raise GenerationError("zero built fraction cannot host a nonzero population")

    ratio = round(spec.tile_size / spec.pixel_size)
    prows = n_rows * ratio
    pcols = n_cols * ratio

    rects = _partition(rng, n_cols, n_rows, spec.n_units)
    field = _bump_field(rng, prows, pcols, n_bumps=max(3, min(8, spec.n_units)))

    built = np.zeros((prows, pcols), dtype=np.uint8)
    lo_f, hi_f = spec.built_fraction_range
    may_populate = spec.population_range[1] > 0
    for c0, r0, w, h in rects:
        sl = (slice(r0 * ratio, (r0 + h) * ratio), slice(c0 * ratio, (c0 + w) * ratio))
        local = field[sl]
        n_px = local.size
        frac = rng.uniform(lo_f, hi_f)
        k = int(round(frac * n_px))
        if may_populate and hi_f > 0:
            k = max(1, k)  # every populated unit needs a home pixel
        if k <= 0:
            continue
        order = np.argsort(-local.ravel(), kind="stable")[:k]
        flat = built[sl].copy().ravel()
        flat[order] = 1
        built[sl] = flat.reshape(local.shape)

    built_tile = built.reshape(n_rows, ratio, n_cols, ratio).any(axis=(1, 3))
    built_tiles_per_unit = []
    for c0, r0, w, h in rects:
        sub = built_tile[r0 : r0 + h, c0 : c0 + w]
        rr, cc = np.nonzero(sub)
        built_tiles_per_unit.append(((rr + r0) * n_cols + (cc + c0)).astype(np.int64))

    cluster_points: list[PoiPoint] = []
    poi_tile_mask = np.zeros((n_rows, n_cols), dtype=bool)
    for attempt in range(_PLACEMENT_ROUNDS):
        cluster_points = _place_clusters(rng, spec, grid, built_tiles_per_unit)
        poi_tile_mask[:] = False
        for p in cluster_points:
            idx = grid.tile_index_of(p.location)
            if idx is not None:
                poi_tile_mask[idx[1], idx[0]] = True
        if not may_populate:
            break
        # every unit must keep a residential built pixel for its population
        commercial_px = np.repeat(np.repeat(poi_tile_mask, ratio, axis=0), ratio, axis=1)
        ok = True
        for c0, r0, w, h in rects:
            sl = (slice(r0 * ratio, (r0 + h) * ratio), slice(c0 * ratio, (c0 + w) * ratio))
            if not np.any((built[sl] == 1) & ~commercial_px[sl]):
                ok = False
                break
        if ok:
            break
    else:
        raise GenerationError(
            "could not place POI clusters without starving a unit of residential pixels"
        )

    scattered: list[PoiPoint] = []
    for _ in range(spec.n_scattered_pois):
        scattered.append(
            PoiPoint(
                location=Point(
                    rng.uniform(spec.extent.min_x, spec.extent.max_x),
                    rng.uniform(spec.extent.min_y, spec.extent.max_y),
                ),
                category=str(rng.choice(_CATEGORIES)),
            )
        )

    commercial_px = np.repeat(np.repeat(poi_tile_mask, ratio, axis=0), ratio, axis=1)
    pixel_pop = np.zeros((prows, pcols), dtype=np.float64)
    units = []
    lo_p, hi_p = spec.population_range
    for k, (c0, r0, w, h) in enumerate(rects):
        sl = (slice(r0 * ratio, (r0 + h) * ratio), slice(c0 * ratio, (c0 + w) * ratio))
        residential = (built[sl] == 1) & ~commercial_px[sl]
        idx = np.flatnonzero(residential.ravel())
        target = math.floor(rng.uniform(lo_p, hi_p) / _QUANTUM) * _QUANTUM
        if idx.size == 0 or target <= 0:
            population = 0.0
            if target > 0:
                raise GenerationError(f"unit {k} has population but no residential pixel")
        else:
            weights = field[sl].ravel()[idx] + 0.25
            raw = target * weights / float(weights.sum())
            vals = np.floor(raw / _QUANTUM) * _QUANTUM
            residual = target - float(vals.sum())
            vals[int(np.argmax(weights))] += residual
            local = pixel_pop[sl].copy().ravel()
            local[idx] = vals
            pixel_pop[sl] = local.reshape(residential.shape)
            population = target
        units.append(
            AdminUnit(
                id=f"u{k:03d}",
                level=AdminLevel.CIRCLE,
                geometry=(
                    rectangle(
                        grid.origin_x + c0 * spec.tile_size,
                        grid.origin_y + r0 * spec.tile_size,
                        grid.origin_x + (c0 + w) * spec.tile_size,
                        grid.origin_y + (r0 + h) * spec.tile_size,
                    ),
                ),
                population=population,
            )
        )

    mask = BinaryRaster(
        origin_x=grid.origin_x,
        origin_y=grid.origin_y,
        pixel_size=spec.pixel_size,
        values=built,
    )
    pixel_raster = Raster(
        origin_x=grid.origin_x,
        origin_y=grid.origin_y,
        pixel_size=spec.pixel_size,
        values=pixel_pop,
    )
    flat_poi_tiles = frozenset(
        int(i) for i in np.flatnonzero(poi_tile_mask.reshape(-1))
    )
    return GroundTruth(
        spec=spec,
        grid=grid,
        units=tuple(units),
        pois=PoiSet(cluster_points + scattered),
        mask=mask,
        pixel_population=pixel_raster,
        poi_tiles=flat_poi_tiles,
    )


def score(estimate: PopulationGrid, truth: GroundTruth) -> ScoreResult:
    """Per-tile MAE/RMSE against the aggregated ground truth."""
    truth_tiles = truth.tile_population()
    if not estimate.grid.geometry_equal(truth.grid):
        raise AlignmentError("estimate grid does not match the ground-truth grid")
    diff = estimate.values - truth_tiles.values
    mae = float(np.mean(np.abs(diff)))
    rmse = float(math.sqrt(np.mean(diff * diff)))
    total_error = abs(estimate.total() - truth_tiles.total())
    return ScoreResult(mae=mae, rmse=rmse, total_error=total_error)


def run_default_pipeline(
    truth: GroundTruth, radius: float = 500.0, threshold: int = 5
) -> tuple[PopulationGrid, AllocationReport]:
    """Run the full disaggregation on a generated scenario."""
    tile_mask = compute_tile_mask(truth.grid, truth.pois, radius, threshold)
    return run_disaggregation(truth.mask, truth.grid, truth.units, tile_mask)


def uniform_baseline(truth: GroundTruth) -> PopulationGrid:
    """Spread each unit's population evenly over its tiles (comparison baseline)."""
    return allocate_uniform(truth.grid, truth.units)


def write_scenario(truth: GroundTruth, out_dir: str | Path) -> dict[str, str]:
    """Write the scenario in the standard pipeline input formats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "admin": out / "admin.geojson",
        "poi": out / "poi.geojson",
        "mask": out / "mask.asc",
        "truth_tiles": out / "truth_tiles.asc",
        "meta": out / "scenario.json",
    }
    write_admin_units(truth.units, paths["admin"])
    write_poi_geojson(truth.pois, paths["poi"])
    write_ascii_grid(truth.mask, paths["mask"])
    write_ascii_grid(truth.tile_population(), paths["truth_tiles"])
    spec = truth.spec
    meta = {
        "seed": spec.seed,
        "extent": [spec.extent.min_x, spec.extent.min_y, spec.extent.max_x, spec.extent.max_y],
        "n_units": spec.n_units,
        "built_fraction_range": list(spec.built_fraction_range),
        "n_poi_clusters": spec.n_poi_clusters,
        "poi_cluster_size_range": list(spec.poi_cluster_size_range),
        "population_range": list(spec.population_range),
        "tile_size": spec.tile_size,
        "pixel_size": spec.pixel_size,
        "n_scattered_pois": spec.n_scattered_pois,
        "grid": {
            "origin_x": truth.grid.origin_x,
            "origin_y": truth.grid.origin_y,
            "n_cols": truth.grid.n_cols,
            "n_rows": truth.grid.n_rows,
            "tile_size": truth.grid.tile_size,
        },
        "total_population": truth.total_population(),
        "n_pois": len(truth.pois),
    }
    paths["meta"].write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return {k: str(v) for k, v in paths.items()}
