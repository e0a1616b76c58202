"""Distribute admin-unit populations over retained tiles by built-up weight.

Each built pixel is assigned by its center to exactly one tile (half-open
rule) and at most one admin unit (first unit in input order wins when
polygons overlap, with a warning). A unit's population then lands on its
retained tiles proportionally to their built-pixel counts.

The proportional denominator is the unit's built pixels on RETAINED tiles
only. Dividing by all of the unit's built pixels would silently drop the
share that falls on excluded tiles; normalizing over retained tiles keeps
the grand total conserved.

Fallbacks, always flagged in the report:
  - a unit with zero retained built pixels spreads its population uniformly
    over all tiles whose centers lie inside it (retained or not);
  - a unit containing no tile center puts its population on the tile of its
    representative point (clamped to the grid edge if necessary).

``brute_force_allocate`` re-implements the whole contract with plain nested
loops and no index structures; the fast path must match it bit-for-bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlignmentError, ConfigurationError, OverlapWarning, ValidationError
from .geo import (
    Point,
    Polygon,
    TileGrid,
    point_in_any,
    points_in_any,
    representative_point,
    tile_centers_in_parts,
)
from .io import AdminUnit, BinaryRaster, PopulationGrid
from .poi_filter import TileMask

__all__ = [
    "UnitTally",
    "PixelAssignment",
    "UnitAllocation",
    "AllocationReport",
    "assign_pixels",
    "allocate",
    "allocate_uniform",
    "brute_force_allocate",
    "run_disaggregation",
]


@dataclass(frozen=True)
class UnitTally:
    """Built-pixel counts for one admin unit, split by tile retention."""

    unit_id: str
    retained_tiles: np.ndarray  # flat tile indices, sorted
    retained_counts: np.ndarray  # int64 built-pixel counts, parallel
    excluded_tiles: np.ndarray
    excluded_counts: np.ndarray

    @property
    def total_retained_built(self) -> int:
        return int(self.retained_counts.sum())

    @property
    def total_built(self) -> int:
        return int(self.retained_counts.sum() + self.excluded_counts.sum())


@dataclass(frozen=True)
class PixelAssignment:
    """Outcome of routing built pixels to tiles and admin units."""

    grid: TileGrid
    tallies: tuple[UnitTally, ...]
    overlap_pixels: int
    built_pixels_total: int
    built_pixels_outside_grid: int
    built_pixels_unassigned: int  # inside grid but in no admin unit


@dataclass(frozen=True)
class UnitAllocation:
    unit_id: str
    population_in: float
    population_out: float
    fallback_used: bool
    retained_tiles: int
    excluded_tiles: int


@dataclass(frozen=True)
class AllocationReport:
    units: tuple[UnitAllocation, ...]
    population_in_total: float
    population_out_total: float
    fallback_units: int
    overlap_pixels: int

    def to_dict(self) -> dict:
        return {
            "totals": {
                "population_in": self.population_in_total,
                "population_out": self.population_out_total,
                "units": len(self.units),
                "fallback_units": self.fallback_units,
                "overlap_pixels": self.overlap_pixels,
            },
            "units": [
                {
                    "id": u.unit_id,
                    "population_in": u.population_in,
                    "population_out": u.population_out,
                    "fallback_used": u.fallback_used,
                    "retained_tiles": u.retained_tiles,
                    "excluded_tiles": u.excluded_tiles,
                }
                for u in self.units
            ],
        }


def _check_inputs(mask: BinaryRaster, grid: TileGrid, tile_mask: TileMask) -> None:
    if not tile_mask.grid.geometry_equal(grid):
        raise AlignmentError("tile mask grid does not match the allocation grid")
    if mask.pixel_size > grid.tile_size:
        raise ConfigurationError(
            f"pixel size {mask.pixel_size} is coarser than tile size {grid.tile_size}"
        )
    if not mask.extent().intersects(grid.extent()):
        raise ConfigurationError("built-up raster extent does not overlap the grid extent")


def assign_pixels(
    mask: BinaryRaster,
    grid: TileGrid,
    units: Sequence[AdminUnit],
    tile_mask: TileMask,
) -> PixelAssignment:
    """Route each valid built pixel to its tile and its first containing unit."""
    _check_inputs(mask, grid, tile_mask)
    built = (mask.values == 1) & ~mask.nodata
    rr, cc = np.nonzero(built)
    xs = mask.origin_x + (cc + 0.5) * mask.pixel_size
    ys = mask.origin_y + (rr + 0.5) * mask.pixel_size
    n = xs.size

    cols, rows, in_grid = grid.tile_indices_of(xs, ys)
    flat_tile = np.where(in_grid, grid.flat_index(cols, rows), -1)

    unit_of = np.full(n, -1, dtype=np.int64)
    overlap = 0
    for k, unit in enumerate(units):
        bb = unit.bbox
        cand = np.flatnonzero(
            (xs >= bb.min_x) & (xs <= bb.max_x) & (ys >= bb.min_y) & (ys <= bb.max_y)
        )
        if cand.size == 0:
            continue
        inside = points_in_any(xs[cand], ys[cand], unit.geometry)
        hit = cand[inside]
        taken = unit_of[hit] != -1
        overlap += int(np.count_nonzero(taken))
        unit_of[hit[~taken]] = k
    if overlap:
        warnings.warn(
            f"{overlap} built pixels fall in more than one admin unit; "
            "first unit in input order wins",
            OverlapWarning,
            stacklevel=2,
        )

    retained_flat = tile_mask.retained.reshape(-1)
    tallies = []
    for k, unit in enumerate(units):
        sel = (unit_of == k) & (flat_tile >= 0)
        tiles = flat_tile[sel]
        keep = retained_flat[tiles]
        r_tiles, r_counts = np.unique(tiles[keep], return_counts=True)
        x_tiles, x_counts = np.unique(tiles[~keep], return_counts=True)
        tallies.append(
            UnitTally(
                unit_id=unit.id,
                retained_tiles=r_tiles,
                retained_counts=r_counts.astype(np.int64),
                excluded_tiles=x_tiles,
                excluded_counts=x_counts.astype(np.int64),
            )
        )
    assigned = unit_of != -1
    return PixelAssignment(
        grid=grid,
        tallies=tuple(tallies),
        overlap_pixels=overlap,
        built_pixels_total=int(n),
        built_pixels_outside_grid=int(np.count_nonzero(~in_grid)),
        built_pixels_unassigned=int(np.count_nonzero(~assigned & in_grid)),
    )


def _anchor_tile(grid: TileGrid, parts: Sequence[Polygon]) -> tuple[int, int]:
    """Tile of the geometry's representative point, clamped into the grid."""
    rp = representative_point(parts)
    c = math.floor((rp.x - grid.origin_x) / grid.tile_size)
    r = math.floor((rp.y - grid.origin_y) / grid.tile_size)
    c = min(max(c, 0), grid.n_cols - 1)
    r = min(max(r, 0), grid.n_rows - 1)
    return int(c), int(r)


def allocate(
    assignment: PixelAssignment, units: Sequence[AdminUnit]
) -> tuple[PopulationGrid, AllocationReport]:
    """Turn pixel tallies into per-tile population, conserving every unit's total."""
    if len(assignment.tallies) != len(units) or any(
        t.unit_id != u.id for t, u in zip(assignment.tallies, units)
    ):
        raise ValidationError("pixel assignment was built from a different unit list")
    grid = assignment.grid
    values = np.zeros(grid.n_tiles, dtype=np.float64)
    rows = []
    fallback_units = 0
    for tally, unit in zip(assignment.tallies, units):
        pop = unit.population
        total = tally.total_retained_built
        fallback = False
        if total > 0:
            contrib = pop * tally.retained_counts.astype(np.float64) / float(total)
            values[tally.retained_tiles] += contrib
            pop_out = float(contrib.sum())
        else:
            fallback = True
            center_tiles = tile_centers_in_parts(grid, unit.geometry)
            if center_tiles.size > 0:
                share = pop / center_tiles.size
                values[center_tiles] += share
                pop_out = float(share * center_tiles.size)
            else:
                c, r = _anchor_tile(grid, unit.geometry)
                values[r * grid.n_cols + c] += pop
                pop_out = pop
        if fallback:
            fallback_units += 1
        rows.append(
            UnitAllocation(
                unit_id=unit.id,
                population_in=pop,
                population_out=pop_out,
                fallback_used=fallback,
                retained_tiles=int(tally.retained_tiles.size),
                excluded_tiles=int(tally.excluded_tiles.size),
            )
        )
    report = AllocationReport(
        units=tuple(rows),
        population_in_total=float(sum(u.population for u in units)),
        population_out_total=float(values.sum()),
        fallback_units=fallback_units,
        overlap_pixels=assignment.overlap_pixels,
    )
    pop_grid = PopulationGrid(grid=grid, values=values.reshape(grid.n_rows, grid.n_cols))
    return pop_grid, report


def run_disaggregation(
    mask: BinaryRaster,
    grid: TileGrid,
    units: Sequence[AdminUnit],
    tile_mask: TileMask,
) -> tuple[PopulationGrid, AllocationReport]:
    """Convenience wrapper: assign pixels, then allocate."""
    return allocate(assign_pixels(mask, grid, units, tile_mask), units)


def allocate_uniform(grid: TileGrid, units: Sequence[AdminUnit]) -> PopulationGrid:
    """Reference spread: each unit's population uniform over its tiles.

    Membership is by tile center; units without a tile center anchor at
    their representative point, like the allocation fallback.
    """
    values = np.zeros(grid.n_tiles, dtype=np.float64)
    for unit in units:
        tiles = tile_centers_in_parts(grid, unit.geometry)
        if tiles.size > 0:
            values[tiles] += unit.population / tiles.size
        else:
            c, r = _anchor_tile(grid, unit.geometry)
            values[r * grid.n_cols + c] += unit.population
    return PopulationGrid(grid=grid, values=values.reshape(grid.n_rows, grid.n_cols))


def brute_force_allocate(
    mask: BinaryRaster,
    grid: TileGrid,
    units: Sequence[AdminUnit],
    tile_mask: TileMask,
) -> PopulationGrid:
    """Same contract as assign_pixels + allocate, as plain nested loops.

    Test oracle: no vectorization, no spatial pruning beyond a bbox check,
    Python-scalar arithmetic only. Must equal :func:`allocate` exactly.
    """
    from .geo import point_in_polygon  # scalar kernel only

    _check_inputs(mask, grid, tile_mask)
    values = [[0.0] * grid.n_cols for _ in range(grid.n_rows)]
    retained = tile_mask.retained

    # per-unit tile -> built pixel count, retained and excluded
    per_unit_retained: list[dict[tuple[int, int], int]] = [dict() for _ in units]
    per_unit_excluded: list[dict[tuple[int, int], int]] = [dict() for _ in units]
    for pr in range(mask.n_rows):
        for pc in range(mask.n_cols):
            if mask.nodata[pr, pc] or mask.values[pr, pc] != 1:
                continue
            px = mask.origin_x + (pc + 0.5) * mask.pixel_size
            py = mask.origin_y + (pr + 0.5) * mask.pixel_size
            tc = math.floor((px - grid.origin_x) / grid.tile_size)
            tr = math.floor((py - grid.origin_y) / grid.tile_size)
            if not (0 <= tc < grid.n_cols and 0 <= tr < grid.n_rows):
                continue
            owner = -1
            for k, unit in enumerate(units):
                bb = unit.bbox
                if not (bb.min_x <= px <= bb.max_x and bb.min_y <= py <= bb.max_y):
                    continue
                if any(point_in_polygon(Point(px, py), part) for part in unit.geometry):
                    owner = k
                    break
            if owner < 0:
                continue
            key = (int(tc), int(tr))
            bucket = per_unit_retained[owner] if retained[tr, tc] else per_unit_excluded[owner]
            bucket[key] = bucket.get(key, 0) + 1

    for k, unit in enumerate(units):
        pop = unit.population
        total = sum(per_unit_retained[k].values())
        if total > 0:
            for (tc, tr), count in per_unit_retained[k].items():
                values[tr][tc] += pop * float(count) / float(total)
        else:
            center_tiles = []
            for tr in range(grid.n_rows):
                for tc in range(grid.n_cols):
                    center = grid.tile_center(tc, tr)
                    if point_in_any(center, unit.geometry):
                        center_tiles.append((tc, tr))
            if center_tiles:
                share = pop / len(center_tiles)
                for tc, tr in center_tiles:
                    values[tr][tc] += share
            else:
                rp = representative_point(unit.geometry)
                tc = math.floor((rp.x - grid.origin_x) / grid.tile_size)
                tr = math.floor((rp.y - grid.origin_y) / grid.tile_size)
                tc = min(max(tc, 0), grid.n_cols - 1)
                tr = min(max(tr, 0), grid.n_rows - 1)
                values[tr][tc] += pop
    return PopulationGrid(grid=grid, values=np.array(values, dtype=np.float64))
