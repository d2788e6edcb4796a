"""Raster extraction for spatial features: simple, bilinear (or IDW) and zonal mean.

Every extraction is reduced to a set of cells plus weights (`CellWeights`)
computed once per geometry; applying those weights to a single raster or to
every day of a stack is then one vectorized gather.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np
import shapely

from geomv.domain.entities.feature import Disk, ExtractionKind, PolygonGeom, SpatialFeature
from geomv.domain.entities.household import Point
from geomv.domain.entities.raster import DailySeries, GridGeoref, GridRaster, GridStack, nodata_mask
from geomv.domain.errors import NoDataError, OutOfExtentError, ValidationError
from geomv.domain.geodesy import degree_span, distance_km
from geomv.logging_config import logger

# Fractional lattice offsets closer than this to 0 or 1 snap to the lattice point
_SNAP = 1e-9

FLAG_BILINEAR_FALLBACK = "bilinear_fallback_simple"
FLAG_ZONAL_FALLBACK = "zonal_fallback_centroid"


class PointInterpolation(str, Enum):
    BILINEAR = "bilinear"
    IDW = "idw"


@dataclass(frozen=True)
class CellWeights:
    """Cells contributing to one extraction.

    `weighted` extractions (simple, bilinear, IDW) combine cells with fixed
    weights and fail on any nodata cell. Zonal extractions average whichever
    cells hold data and fall back to `fallback` when none do.
    """

    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    weighted: bool = True
    fallback: Optional[Tuple[int, int]] = None
    flags: FrozenSet[str] = field(default_factory=frozenset)

    @property
    def cells(self) -> List[Tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))


def _snap(frac: float) -> float:
    if abs(frac) < _SNAP:
        return 0.0
    if abs(1.0 - frac) < _SNAP:
        return 1.0
    return frac


def _single(row: int, col: int, flags=frozenset()) -> CellWeights:
    return CellWeights(np.array([row]), np.array([col]), np.array([1.0]), flags=frozenset(flags))


def simple_weights(georef: GridGeoref, p: Point) -> CellWeights:
    row, col = georef.cell_of(p.lat, p.lon)
    return _single(row, col)


def _lattice_position(georef: GridGeoref, p: Point) -> Optional[Tuple[float, float]]:
    """Position of p in the cell-center lattice, counted from the south-west center.

    None when p lies outside the hull of cell centers.
    """
    fx = (p.lon - georef.x_ll) / georef.cell_size - 0.5
    fy = (p.lat - georef.y_ll) / georef.cell_size - 0.5
    fx, fy = _snap_edge(fx, georef.n_cols - 1), _snap_edge(fy, georef.n_rows - 1)
    if not (0.0 <= fx <= georef.n_cols - 1 and 0.0 <= fy <= georef.n_rows - 1):
        return None
    return fx, fy


def _snap_edge(f: float, upper: int) -> float:
    if abs(f) < _SNAP:
        return 0.0
    if abs(f - upper) < _SNAP:
        return float(upper)
    return f


def _neighbourhood(georef: GridGeoref, fx: float, fy: float):
    """The 2x2 block of cell centers around (fx, fy) with offsets (u, v)."""
    c0 = min(int(math.floor(fx)), max(georef.n_cols - 2, 0))
    s0 = min(int(math.floor(fy)), max(georef.n_rows - 2, 0))
    u, v = _snap(fx - c0), _snap(fy - s0)
    c1 = min(c0 + 1, georef.n_cols - 1)
    s1 = min(s0 + 1, georef.n_rows - 1)
    # south index -> row index (row 0 is the north edge)
    r0, r1 = georef.n_rows - 1 - s0, georef.n_rows - 1 - s1
    return (r0, c0), (r0, c1), (r1, c0), (r1, c1), u, v


def _compact(cells, weights, flags=frozenset()) -> CellWeights:
    merged: Dict[Tuple[int, int], float] = {}
    for cell, w in zip(cells, weights):
        if w > 0.0:
            merged[cell] = merged.get(cell, 0.0) + w
    ordered = sorted(merged)
    return CellWeights(
        np.array([c[0] for c in ordered]),
        np.array([c[1] for c in ordered]),
        np.array([merged[c] for c in ordered]),
        flags=frozenset(flags),
    )


def bilinear_weights(georef: GridGeoref, p: Point) -> CellWeights:
    """Bilinear weights on the four surrounding cell centers.

    Outside the hull of cell centers the simple (containing cell) extraction is
    used and flagged. Zero-weight corners do not contribute.
    """
    if not georef.contains(p.lat, p.lon):
        raise OutOfExtentError(f"point ({p.lat}, {p.lon}) outside grid extent")
    pos = _lattice_position(georef, p)
    if pos is None:
        return CellWeights(*_fallback_arrays(georef, p), flags=frozenset({FLAG_BILINEAR_FALLBACK}))
    q00, q10, q01, q11, u, v = _neighbourhood(georef, *pos)
    weights = ((1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v)
    return _compact((q00, q10, q01, q11), weights)


def _fallback_arrays(georef: GridGeoref, p: Point):
    row, col = georef.cell_of(p.lat, p.lon)
    return np.array([row]), np.array([col]), np.array([1.0])


def idw_weights(georef: GridGeoref, p: Point) -> CellWeights:
    """Inverse-distance (1/d) weights over the four nearest cell centers."""
    if not georef.contains(p.lat, p.lon):
        raise OutOfExtentError(f"point ({p.lat}, {p.lon}) outside grid extent")
    pos = _lattice_position(georef, p)
    if pos is None:
        return CellWeights(*_fallback_arrays(georef, p), flags=frozenset({FLAG_BILINEAR_FALLBACK}))
    cells = list(dict.fromkeys(_neighbourhood(georef, *pos)[:4]))
    centers = [georef.center(r, c) for r, c in cells]
    d = distance_km(p, [c[0] for c in centers], [c[1] for c in centers])
    hit = np.flatnonzero(d == 0.0)
    if hit.size:
        return _single(*cells[int(hit[0])])
    inv = 1.0 / d
    return _compact(cells, inv / inv.sum())


def point_weights(
    georef: GridGeoref, p: Point, kind: ExtractionKind, interpolation: PointInterpolation = PointInterpolation.BILINEAR
) -> CellWeights:
    if kind is ExtractionKind.SIMPLE:
        return simple_weights(georef, p)
    if kind is ExtractionKind.BILINEAR:
        if PointInterpolation(interpolation) is PointInterpolation.IDW:
            return idw_weights(georef, p)
        return bilinear_weights(georef, p)
    raise ValidationError(f"point geometries accept simple or bilinear extraction, not {kind.value}")


def _check_intersects(georef: GridGeoref, bounds) -> None:
    min_lon, min_lat, max_lon, max_lat = bounds
    x0, y0, x1, y1 = georef.bounds()
    if max_lon < x0 or min_lon > x1 or max_lat < y0 or min_lat > y1:
        raise OutOfExtentError(f"shape bounds {bounds} do not intersect grid extent")


def _centers_in_box(georef: GridGeoref, bounds):
    """Row/col index grids and center coordinates of cells whose centers fall in `bounds`."""
    min_lon, min_lat, max_lon, max_lat = bounds
    lats, lons = georef.center_lats(), georef.center_lons()
    rows = np.flatnonzero((lats >= min_lat) & (lats <= max_lat))
    cols = np.flatnonzero((lons >= min_lon) & (lons <= max_lon))
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    rr, cc = rr.ravel(), cc.ravel()
    return rr, cc, lats[rr], lons[cc]


def _zonal(georef: GridGeoref, inside_rows, inside_cols, centroid: Point) -> CellWeights:
    fallback = None
    if georef.contains(centroid.lat, centroid.lon):
        fallback = georef.cell_of(centroid.lat, centroid.lon)
    if inside_rows.size == 0:
        if fallback is None:
            raise OutOfExtentError(f"no cell center inside shape and centroid {centroid} outside grid")
        return CellWeights(
            np.array([fallback[0]]),
            np.array([fallback[1]]),
            np.array([1.0]),
            weighted=False,
            fallback=fallback,
            flags=frozenset({FLAG_ZONAL_FALLBACK}),
        )
    n = inside_rows.size
    return CellWeights(inside_rows, inside_cols, np.full(n, 1.0 / n), weighted=False, fallback=fallback)


def disk_weights(georef: GridGeoref, disk: Disk) -> CellWeights:
    dlat, dlon = degree_span(disk.center, disk.radius_km)
    bounds = (disk.center.lon - dlon, disk.center.lat - dlat, disk.center.lon + dlon, disk.center.lat + dlat)
    _check_intersects(georef, bounds)
    rr, cc, lats, lons = _centers_in_box(georef, bounds)
    inside = distance_km(disk.center, lats, lons) <= disk.radius_km
    return _zonal(georef, rr[inside], cc[inside], disk.center)


def polygon_weights(georef: GridGeoref, polygon: PolygonGeom) -> CellWeights:
    shape = shapely.Polygon(polygon.rings[0], holes=list(polygon.rings[1:]))
    shapely.prepare(shape)
    _check_intersects(georef, shape.bounds)
    rr, cc, lats, lons = _centers_in_box(georef, shape.bounds)
    inside = shapely.intersects_xy(shape, lons, lats) if rr.size else np.zeros(0, dtype=bool)
    c = shape.centroid
    return _zonal(georef, rr[inside], cc[inside], Point(c.y, c.x))


def feature_weights(
    georef: GridGeoref, feature: SpatialFeature, interpolation: PointInterpolation = PointInterpolation.BILINEAR
) -> CellWeights:
    geometry = feature.geometry
    if isinstance(geometry, Disk):
        return disk_weights(georef, geometry)
    if isinstance(geometry, PolygonGeom):
        return polygon_weights(georef, geometry)
    return point_weights(georef, geometry, feature.method.extraction, interpolation)


def apply_weights(values: np.ndarray, nodata: float, cw: CellWeights, with_day: bool = True) -> np.ndarray:
    """Apply `cw` to a (n_days, rows, cols) block; returns one value per day."""
    gathered = values[:, cw.rows, cw.cols]
    missing = nodata_mask(gathered, nodata)
    if cw.weighted:
        if missing.any():
            day = int(np.flatnonzero(missing.any(axis=1))[0])
            cells = [cell for cell, bad in zip(cw.cells, missing[day]) if bad]
            raise NoDataError(cells, day=day if with_day else None)
        return gathered @ cw.weights

    valid = ~missing
    counts = valid.sum(axis=1)
    sums = np.where(valid, gathered, 0.0).sum(axis=1)
    out = np.empty(values.shape[0])
    has = counts > 0
    out[has] = sums[has] / counts[has]
    for day in np.flatnonzero(~has):
        day = int(day)
        if cw.fallback is None:
            raise NoDataError(cw.cells, day=day if with_day else None)
        value = values[day, cw.fallback[0], cw.fallback[1]]
        if nodata_mask(np.asarray(value), nodata):
            raise NoDataError([cw.fallback], day=day if with_day else None)
        out[day] = value
    return out


def _on_raster(raster: GridRaster, cw: CellWeights) -> float:
    return float(apply_weights(raster.values[None], raster.georef.nodata, cw, with_day=False)[0])


def extract_simple(raster: GridRaster, p: Point) -> float:
    return _on_raster(raster, simple_weights(raster.georef, p))


def extract_bilinear(
    raster: GridRaster, p: Point, interpolation: PointInterpolation = PointInterpolation.BILINEAR
) -> float:
    kind = ExtractionKind.BILINEAR
    return _on_raster(raster, point_weights(raster.georef, p, kind, interpolation))


def extract_zonal_mean(raster: GridRaster, shape) -> float:
    if isinstance(shape, Disk):
        return _on_raster(raster, disk_weights(raster.georef, shape))
    if isinstance(shape, PolygonGeom):
        return _on_raster(raster, polygon_weights(raster.georef, shape))
    raise ValidationError("zonal mean requires a disk or polygon geometry")


def extract_series(
    stack: GridStack,
    feature: SpatialFeature,
    interpolation: PointInterpolation = PointInterpolation.BILINEAR,
    weights: Optional[CellWeights] = None,
) -> DailySeries:
    """Apply the feature's extraction to every day of the stack."""
    cw = weights if weights is not None else feature_weights(stack.georef, feature, interpolation)
    values = apply_weights(stack.values, stack.georef.nodata, cw)
    return DailySeries(feature.feature_id, stack.start_date, values, cw.flags)


class ExtractionService:
    """Batch extraction of many features from one stack.

    Weights are cached per geometry so households sharing an EA or admin
    geometry reuse one neighbourhood computation.
    """

    def __init__(self, stack: GridStack, interpolation: PointInterpolation = PointInterpolation.BILINEAR):
        self.stack = stack
        self.interpolation = PointInterpolation(interpolation)
        self._cache: Dict[tuple, CellWeights] = {}

    def weights_for(self, feature: SpatialFeature) -> CellWeights:
        key = (feature.geometry, feature.method.extraction)
        cw = self._cache.get(key)
        if cw is None:
            cw = feature_weights(self.stack.georef, feature, self.interpolation)
            self._cache[key] = cw
        return cw

    def extract(self, feature: SpatialFeature) -> DailySeries:
        return extract_series(self.stack, feature, self.interpolation, self.weights_for(feature))

    def extract_all(self, features: Iterable[SpatialFeature]) -> List[DailySeries]:
        out = []
        flagged = 0
        for feature in features:
            series = self.extract(feature)
            flagged += bool(series.flags)
            out.append(series)
        if flagged:
            logger.warning(f"{flagged} of {len(out)} extractions used a fallback path")
        logger.info(f"extracted {len(out)} series over {self.stack.n_days} days ({len(self._cache)} geometries)")
        return out
