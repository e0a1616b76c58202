"""Exclude non-residential tiles using point-of-interest density.

A tile is dropped when some POI inside it has at least ``threshold`` POIs
(including itself) within ``radius`` meters. Isolated POIs scattered through
residential fabric therefore rarely remove tiles; dense commercial clusters
do.

Buffer membership is a closed disc evaluated on squared distances
(dx*dx + dy*dy <= radius*radius), so counts are exactly reproducible and
monotone in the radius. The center POI always counts toward its own buffer:
with threshold 1 every POI is dense, which makes the degenerate bound easy
to reason about.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ParameterError, ValidationError
from .geo import Point, TileGrid

__all__ = ["PoiPoint", "PoiSet", "TileMask", "buffer_count", "dense_pois", "compute_tile_mask"]


@dataclass(frozen=True, slots=True)
class PoiPoint:
    """A point of interest with a free-form category label."""

    location: Point
    category: str = ""


class PoiSet:
    """Immutable POI collection with a uniform-bucket spatial index.

    Radius queries return exactly what a linear scan over all points
    returns; the buckets only prune candidates.
    """

    def __init__(self, points: Iterable[PoiPoint]):
        self._points: tuple[PoiPoint, ...] = tuple(points)
        n = len(self._points)
        self._xs = np.array([p.location.x for p in self._points], dtype=np.float64)
        self._ys = np.array([p.location.y for p in self._points], dtype=np.float64)
        if n:
            self._min_x = float(self._xs.min())
            self._min_y = float(self._ys.min())
            span = max(float(self._xs.max()) - self._min_x, float(self._ys.max()) - self._min_y)
            self._cell = span / max(1, math.isqrt(n)) if span > 0 else 1.0
            bx = np.floor((self._xs - self._min_x) / self._cell).astype(np.int64)
            by = np.floor((self._ys - self._min_y) / self._cell).astype(np.int64)
            buckets: dict[tuple[int, int], list[int]] = {}
            for i in range(n):
                buckets.setdefault((int(bx[i]), int(by[i])), []).append(i)
            self._buckets = {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}
            self._bucket_max = (int(bx.max()), int(by.max()))
        else:
            self._min_x = 0.0
            self._min_y = 0.0
            self._cell = 1.0
            self._buckets = {}
            self._bucket_max = (0, 0)

    @property
    def points(self) -> tuple[PoiPoint, ...]:
        return self._points

    def __len__(self) -> int:
        return len(self._points)

    def __iter__(self) -> Iterator[PoiPoint]:
        return iter(self._points)

    def _candidates(self, x: float, y: float, radius: float) -> np.ndarray:
        bx0 = max(0, math.floor((x - radius - self._min_x) / self._cell))
        bx1 = min(self._bucket_max[0], math.floor((x + radius - self._min_x) / self._cell))
        by0 = max(0, math.floor((y - radius - self._min_y) / self._cell))
        by1 = min(self._bucket_max[1], math.floor((y + radius - self._min_y) / self._cell))
        chunks = []
        for cx in range(bx0, bx1 + 1):
            for cy in range(by0, by1 + 1):
                got = self._buckets.get((cx, cy))
                if got is not None:
                    chunks.append(got)
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)

    def indices_within(self, x: float, y: float, radius: float) -> np.ndarray:
        """Sorted indices of points within the closed disc of ``radius``."""
        cand = self._candidates(x, y, radius)
        if cand.size == 0:
            return cand
        dx = self._xs[cand] - x
        dy = self._ys[cand] - y
        hit = cand[dx * dx + dy * dy <= radius * radius]
        hit.sort()
        return hit

    def count_within(self, x: float, y: float, radius: float) -> int:
        cand = self._candidates(x, y, radius)
        if cand.size == 0:
            return 0
        dx = self._xs[cand] - x
        dy = self._ys[cand] - y
        return int(np.count_nonzero(dx * dx + dy * dy <= radius * radius))


@dataclass(frozen=True)
class TileMask:
    """Per-tile retained flags; True keeps the tile for allocation."""

    grid: TileGrid
    retained: np.ndarray  # bool, shape (n_rows, n_cols)

    def __post_init__(self):
        retained = np.asarray(self.retained, dtype=bool)
        if retained.shape != (self.grid.n_rows, self.grid.n_cols):
            raise ValidationError(
                f"mask shape {retained.shape} does not match grid "
                f"{self.grid.n_rows}x{self.grid.n_cols}"
            )
        retained.setflags(write=False)
        object.__setattr__(self, "retained", retained)

    @property
    def n_excluded(self) -> int:
        return int(self.retained.size - np.count_nonzero(self.retained))

    def excluded_flat(self) -> np.ndarray:
        """Sorted flat indices of excluded tiles."""
        return np.flatnonzero(~self.retained.reshape(-1))


def _check_radius_threshold(radius: float, threshold: int | None = None) -> None:
    if not (radius > 0 and math.isfinite(radius)):
        raise ParameterError(f"radius must be positive, got {radius}")
    if threshold is not None and threshold < 1:
        raise ParameterError(f"threshold must be at least 1, got {threshold}")


def buffer_count(pois: PoiSet, center: Point, radius: float) -> int:
    """Number of POIs within ``radius`` of ``center`` (closed disc).

    When ``center`` is itself a member of the set it is included in the
    count, since its distance to itself is zero.
    """
    _check_radius_threshold(radius)
    return pois.count_within(center.x, center.y, radius)


def dense_pois(pois: PoiSet, radius: float, threshold: int) -> tuple[PoiPoint, ...]:
    """The POIs whose buffer holds at least ``threshold`` points, input order."""
    _check_radius_threshold(radius, threshold)
    out = []
    for p in pois:
        if pois.count_within(p.location.x, p.location.y, radius) >= threshold:
            out.append(p)
    return tuple(out)


def compute_tile_mask(grid: TileGrid, pois: PoiSet, radius: float, threshold: int) -> TileMask:
    """Mark tiles that contain at least one dense POI as not retained.

    POIs outside the grid extent never mark a tile but still contribute to
    the buffer counts of POIs inside it.
    """
    _check_radius_threshold(radius, threshold)
    retained = np.ones((grid.n_rows, grid.n_cols), dtype=bool)
    for p in dense_pois(pois, radius, threshold):
        idx = grid.tile_index_of(p.location)
        if idx is not None:
            col, row = idx
            retained[row, col] = False
    return TileMask(grid=grid, retained=retained)
