from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

from geomv.domain.entities.household import Point, Ring
from geomv.domain.errors import ValidationError


class ExtractionKind(str, Enum):
    SIMPLE = "simple"
    BILINEAR = "bilinear"
    ZONAL_MEAN = "zonal_mean"


class Method(str, Enum):
    HH_SIMPLE = "hh_simple"
    HH_BILINEAR = "hh_bilinear"
    EA_SIMPLE = "ea_simple"
    EA_BILINEAR = "ea_bilinear"
    EA_MOD_SIMPLE = "ea_mod_simple"
    EA_MOD_BILINEAR = "ea_mod_bilinear"
    ADMIN_CENTER_SIMPLE = "admin_center_simple"
    ADMIN_CENTER_BILINEAR = "admin_center_bilinear"
    EA_ZONE = "ea_zone"
    ADMIN_ZONE = "admin_zone"

    @property
    def extraction(self) -> ExtractionKind:
        if self in (Method.EA_ZONE, Method.ADMIN_ZONE):
            return ExtractionKind.ZONAL_MEAN
        if self.value.endswith("_bilinear"):
            return ExtractionKind.BILINEAR
        return ExtractionKind.SIMPLE

    @property
    def is_point(self) -> bool:
        return self.extraction is not ExtractionKind.ZONAL_MEAN


BASELINE_METHOD = Method.HH_BILINEAR


@dataclass(frozen=True)
class Disk:
    center: Point
    radius_km: float


@dataclass(frozen=True)
class PolygonGeom:
    rings: Tuple[Ring, ...]


Geometry = Union[Point, Disk, PolygonGeom]


@dataclass(frozen=True)
class SpatialFeature:
    feature_id: str
    household_id: str
    method: Method
    geometry: Geometry

    def __post_init__(self):
        method = Method(self.method)
        object.__setattr__(self, "method", method)
        if method.is_point and not isinstance(self.geometry, Point):
            raise ValidationError(f"{method.value} requires a point geometry")
        if method is Method.EA_ZONE and not isinstance(self.geometry, Disk):
            raise ValidationError("ea_zone requires a disk geometry")
        if method is Method.ADMIN_ZONE and not isinstance(self.geometry, PolygonGeom):
            raise ValidationError("admin_zone requires a polygon geometry")


def feature_id_for(household_id: str, method: Method) -> str:
    return f"{household_id}:{method.value}"


@dataclass(frozen=True)
class MaskParams:
    urban_max_km: float = 2.0
    rural_max_km: float = 5.0
    rural_extra_max_km: float = 10.0
    rural_extra_share: float = 0.01
    seed: int = 0
    constrain_to_admin: bool = False

    def __post_init__(self):
        if not 0.0 <= self.urban_max_km <= self.rural_max_km <= self.rural_extra_max_km:
            raise ValidationError("mask maxima must satisfy 0 <= urban <= rural <= rural_extra")
        if not 0.0 <= self.rural_extra_share <= 1.0:
            raise ValidationError("rural_extra_share must lie in [0, 1]")
