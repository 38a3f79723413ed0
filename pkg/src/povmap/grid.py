"""Training-tile grid aligned to the nightlight raster's own pixels."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import InputError
from .formats import AsciiGridRaster, PolygonSet

METERS_PER_DEGREE = 111320.0
DEFAULT_TILE_SIDE_M = 450.0
MAX_ABS_LAT = 89.0


class GeoPoint(NamedTuple):
    lon: float
    lat: float


@dataclass(frozen=True)
class TileFootprint:
    center: GeoPoint
    side_m: float
    min_lon: float
    max_lon: float
    min_lat: float
    max_lat: float

    @property
    def bounds(self):
        return (self.min_lon, self.max_lon, self.min_lat, self.max_lat)


@dataclass
class CentroidRecord:
    row: int
    col: int
    center: GeoPoint
    footprint: TileFootprint
    population: float
    nightlight_sum: float
    night_class: Optional[int] = None


def pixel_center(raster: AsciiGridRaster, row: int, col: int) -> GeoPoint:
    if not (0 <= row < raster.nrows and 0 <= col < raster.ncols):
        raise IndexError(f"pixel ({row}, {col}) outside {raster.nrows}x{raster.ncols} grid")
    return GeoPoint(raster.xll + (col + 0.5) * raster.cellsize,
                    raster.yll + (raster.nrows - row - 0.5) * raster.cellsize)


def _pixel_centers(raster):
    rows, cols = np.divmod(np.arange(raster.nrows * raster.ncols), raster.ncols)
    lon = raster.xll + (cols + 0.5) * raster.cellsize
    lat = raster.yll + (raster.nrows - rows - 0.5) * raster.cellsize
    return rows, cols, lon, lat


def point_in_polygon(p, ring, backend=None) -> bool:
    """Even-odd ray casting; points on an edge or vertex count as inside."""
    return bool(kernels.points_in_ring([p[0]], [p[1]], ring, backend=backend)[0])


def points_in_any(lon, lat, aois: PolygonSet, backend=None):
    inside = np.zeros(len(lon), dtype=bool)
    for ring in aois.polygons:
        todo = ~inside
        if not todo.any():
            break
        inside[todo] = kernels.points_in_ring(lon[todo], lat[todo], ring, backend=backend)
    return inside


def _half_sizes(lat, side_m):
    half_h = (side_m / 2.0) / METERS_PER_DEGREE
    half_w = half_h / np.cos(np.radians(lat))
    return half_w, half_h


def tile_footprint(center, side_m: float = DEFAULT_TILE_SIDE_M) -> TileFootprint:
    """Square ground footprint around ``center`` using an equirectangular scale."""
    lon, lat = center
    if not side_m > 0:
        raise InputError(f"tile side must be positive, got {side_m}")
    if not abs(lat) < MAX_ABS_LAT:
        raise InputError(f"latitude {lat} too close to a pole")
    half_w, half_h = _half_sizes(lat, side_m)
    half_w = float(half_w)
    return TileFootprint(GeoPoint(lon, lat), side_m,
                         lon - half_w, lon + half_w, lat - half_h, lat + half_h)


def sum_raster_in_footprint(raster: AsciiGridRaster, fp: TileFootprint, backend=None) -> float:
    """Sum of cells whose centers lie within the footprint; nodata counts as 0."""
    return float(kernels.footprint_sums(raster.masked(), raster.xll, raster.yll,
                                        raster.cellsize, [fp.bounds], backend=backend)[0])


def extract_centroids(vnl: AsciiGridRaster, worldpop: AsciiGridRaster, aois: PolygonSet,
                      min_pop: float = 2, side_m: float = DEFAULT_TILE_SIDE_M,
                      backend=None) -> list:
    """One record per nightlight pixel inside an AOI with enough people in its tile.

    Records come back ordered by (row, col).
    """
    if not len(aois):
        raise InputError("at least one AOI polygon is required")
    rows, cols, lon, lat = _pixel_centers(vnl)
    keep = points_in_any(lon, lat, aois, backend=backend)
    rows, cols, lon, lat = rows[keep], cols[keep], lon[keep], lat[keep]
    if np.any(np.abs(lat) >= MAX_ABS_LAT):
        raise InputError("AOI reaches latitudes too close to a pole")
    half_w, half_h = _half_sizes(lat, side_m)
    bounds = np.column_stack([lon - half_w, lon + half_w, lat - half_h, lat + half_h])

    pop = kernels.footprint_sums(worldpop.masked(), worldpop.xll, worldpop.yll,
                                 worldpop.cellsize, bounds, backend=backend)
    ok = pop >= min_pop
    light = kernels.footprint_sums(vnl.masked(), vnl.xll, vnl.yll, vnl.cellsize,
                                   bounds[ok], backend=backend)

    records = []
    for r, c, x, y, b, p, s in zip(rows[ok], cols[ok], lon[ok], lat[ok], bounds[ok],
                                   pop[ok], light):
        center = GeoPoint(float(x), float(y))
        fp = TileFootprint(center, side_m, *map(float, b))
        records.append(CentroidRecord(int(r), int(c), center, fp, float(p), float(s)))
    return records


CENTROID_SCHEMA = [("row", int), ("col", int), ("lon", float), ("lat", float),
                   ("population", float), ("nightlight_sum", float)]


def centroid_rows(records):
    return [(r.row, r.col, r.center.lon, r.center.lat, r.population, r.nightlight_sum)
            for r in records]
