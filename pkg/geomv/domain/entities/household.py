from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import NamedTuple, Optional, Tuple

import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from geomv.domain.errors import GeometryError, ValidationError


class Stratum(str, Enum):
    URBAN = "urban"
    RURAL = "rural"


class SeasonRegion(str, Enum):
    UNIMODAL = "unimodal"
    NORTH = "north"
    SOUTH = "south"


class Point(NamedTuple):
    lat: float
    lon: float


Ring = Tuple[Tuple[float, float], ...]  # (lon, lat) vertices


@dataclass(frozen=True)
class Household:
    household_id: str
    ea_id: str
    admin_id: str
    lat: float
    lon: float
    stratum: Stratum = Stratum.RURAL
    season_region: SeasonRegion = SeasonRegion.UNIMODAL

    def __post_init__(self):
        if not (self.household_id and self.ea_id and self.admin_id):
            raise ValidationError("household, EA and admin identifiers must be non-empty")
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"household {self.household_id}: latitude {self.lat} out of range")
        object.__setattr__(self, "stratum", Stratum(self.stratum))
        object.__setattr__(self, "season_region", SeasonRegion(self.season_region))

    @property
    def point(self) -> Point:
        return Point(self.lat, self.lon)


@dataclass(frozen=True)
class AdminPolygon:
    """Administrative unit. Rings hold (lon, lat) vertices; the first ring is the outer boundary."""

    admin_id: str
    rings: Tuple[Ring, ...]
    centroid: Optional[Point] = None
    centroid_external: bool = False

    def __post_init__(self):
        rings = tuple(tuple((float(x), float(y)) for x, y in ring) for ring in self.rings)
        if not rings:
            raise GeometryError(f"admin unit {self.admin_id}: no rings")
        if len(set(rings[0])) < 3:
            raise GeometryError(f"admin unit {self.admin_id}: outer ring needs 3 distinct vertices")
        object.__setattr__(self, "rings", rings)
        if self.shape.area == 0.0:
            raise GeometryError(f"admin unit {self.admin_id}: zero-area outer ring")

    @cached_property
    def shape(self) -> ShapelyPolygon:
        polygon = ShapelyPolygon(self.rings[0], holes=list(self.rings[1:]))
        shapely.prepare(polygon)
        return polygon

    def contains(self, point: Point) -> bool:
        return bool(shapely.intersects_xy(self.shape, point.lon, point.lat))
