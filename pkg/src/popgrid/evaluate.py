"""Mask-quality metrics and zonal population statistics.

Built-up (value 1) is the positive class. Nothing here resamples
implicitly: comparing rasters with different geometry is an error, and
coarsening a fine mask onto a tile grid is an explicit, thresholded step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlignmentError, ParameterError
from .geo import TileGrid, tile_centers_in_parts
from .io import AdminUnit, PopulationGrid, Raster

__all__ = [
    "ConfusionCounts",
    "Metrics",
    "ZonalRow",
    "confusion",
    "metrics",
    "downsample_to_tiles",
    "zonal_stats",
]

UNASSIGNED_ID = "_unassigned"


@dataclass(frozen=True)
class ConfusionCounts:
    """Cell counts with built-up as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ParameterError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    precision: float
    recall: float
    iou: float

    def to_dict(self, counts: ConfusionCounts | None = None) -> dict:
        out = {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "iou": self.iou,
        }
        if counts is not None:
            out.update({"tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "tn": counts.tn})
        return out


def confusion(predicted: Raster, reference: Raster) -> ConfusionCounts:
    """Compare two binary rasters cell by cell.

    The rasters must share origin, pixel size and dimensions exactly; cells
    that are nodata in either raster are skipped.
    """
    if not predicted.geometry_equal(reference):
        raise AlignmentError(
            "predicted and reference rasters do not share grid geometry "
            f"(({predicted.origin_x}, {predicted.origin_y}, {predicted.pixel_size}, "
            f"{predicted.values.shape}) vs ({reference.origin_x}, {reference.origin_y}, "
            f"{reference.pixel_size}, {reference.values.shape}))"
        )
    valid = ~predicted.nodata & ~reference.nodata
    p = (predicted.values != 0) & valid
    r = (reference.values != 0) & valid
    tp = int(np.count_nonzero(p & r))
    fp = int(np.count_nonzero(p & ~r & valid))
    fn = int(np.count_nonzero(~p & r & valid))
    tn = int(np.count_nonzero(~p & ~r & valid))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def metrics(c: ConfusionCounts) -> Metrics:
    """Accuracy and F1 (plus precision/recall/IoU as extras).

    With no positives anywhere (2*tp + fp + fn == 0) the prediction is a
    perfect all-negative classifier, so F1/precision/recall/IoU are 1.0.
    """
    if c.total == 0:
        raise ParameterError("cannot compute metrics over zero cells")
    accuracy = (c.tp + c.tn) / c.total
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return Metrics(accuracy=accuracy, f1=1.0, precision=1.0, recall=1.0, iou=1.0)
    f1 = 2 * c.tp / denom
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else (1.0 if c.fn == 0 else 0.0)
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else (1.0 if c.fp == 0 else 0.0)
    union = c.tp + c.fp + c.fn
    iou = c.tp / union if union else 1.0
    return Metrics(accuracy=accuracy, f1=f1, precision=precision, recall=recall, iou=iou)


def downsample_to_tiles(raster: Raster, grid: TileGrid, theta: float = 0.5) -> Raster:
    """Binarize a fine mask at tile resolution.

    A tile becomes 1 when the built fraction among its valid pixels is at
    least ``theta``; a tile whose pixels are all nodata (or that holds no
    pixel center) becomes nodata.
    """
    if not (0.0 < theta <= 1.0):
        raise ParameterError(f"theta must be in (0, 1], got {theta}")
    rows_idx, cols_idx = np.indices(raster.values.shape)
    xs = raster.origin_x + (cols_idx.ravel() + 0.5) * raster.pixel_size
    ys = raster.origin_y + (rows_idx.ravel() + 0.5) * raster.pixel_size
    cols, rows, inside = grid.tile_indices_of(xs, ys)
    valid = inside & ~raster.nodata.ravel()
    flat = grid.flat_index(cols[valid], rows[valid])
    built = (raster.values.ravel()[valid] != 0).astype(np.int64)
    n_tiles = grid.n_tiles
    valid_per_tile = np.bincount(flat, minlength=n_tiles)
    built_per_tile = np.bincount(flat, weights=built, minlength=n_tiles).astype(np.int64)
    nodata = valid_per_tile == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = built_per_tile / valid_per_tile
    values = np.where(~nodata & (frac >= theta), 1.0, 0.0)
    return Raster(
        origin_x=grid.origin_x,
        origin_y=grid.origin_y,
        pixel_size=grid.tile_size,
        values=values.reshape(grid.n_rows, grid.n_cols),
        nodata=nodata.reshape(grid.n_rows, grid.n_cols),
    )


@dataclass(frozen=True)
class ZonalRow:
    unit_id: str
    population_sum: float
    tile_count: int
    built_tile_count: int
    mean_density: float  # persons per km^2


def zonal_stats(
    pop: PopulationGrid,
    units: Sequence[AdminUnit],
    built: Raster | None = None,
) -> list[ZonalRow]:
    """Sum tile populations per admin unit (tile centers decide membership).

    Tiles claimed by no unit are reported under a final ``_unassigned`` row,
    so the rows always total the grid's grand total. When ``built`` (a
    tile-resolution 0/1 raster) is given it supplies built_tile_count;
    otherwise tiles with positive population are counted as built.
    """
    grid = pop.grid
    flat_pop = pop.values.reshape(-1)
    if built is not None:
        if (
            built.origin_x != grid.origin_x
            or built.origin_y != grid.origin_y
            or built.pixel_size != grid.tile_size
            or built.values.shape != (grid.n_rows, grid.n_cols)
        ):
            raise AlignmentError("built raster does not match the population grid geometry")
        built_flat = (built.values.reshape(-1) != 0) & ~built.nodata.reshape(-1)
    else:
        built_flat = flat_pop > 0
    tile_area_km2 = (grid.tile_size / 1000.0) ** 2
    taken = np.zeros(grid.n_tiles, dtype=bool)
    rows: list[ZonalRow] = []
    for unit in units:
        tiles = tile_centers_in_parts(grid, unit.geometry)
        mine = tiles[~taken[tiles]]
        taken[mine] = True
        rows.append(_zonal_row(unit.id, mine, flat_pop, built_flat, tile_area_km2))
    rest = np.flatnonzero(~taken)
    rows.append(_zonal_row(UNASSIGNED_ID, rest, flat_pop, built_flat, tile_area_km2))
    return rows


def _zonal_row(
    unit_id: str,
    tiles: np.ndarray,
    flat_pop: np.ndarray,
    built_flat: np.ndarray,
    tile_area_km2: float,
) -> ZonalRow:
    pop_sum = float(flat_pop[tiles].sum())
    count = int(tiles.size)
    density = pop_sum / (count * tile_area_km2) if count else 0.0
    return ZonalRow(
        unit_id=unit_id,
        population_sum=pop_sum,
        tile_count=count,
        built_tile_count=int(np.count_nonzero(built_flat[tiles])),
        mean_density=density,
    )
