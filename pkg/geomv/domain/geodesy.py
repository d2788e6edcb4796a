"""Local equirectangular geometry on a spherical earth.

Offsets handled here are at most a few tens of kilometres, so the planar
approximation around the reference latitude is used throughout.
"""

from __future__ import annotations

import math

import numpy as np

from geomv.domain.entities.household import Point
from geomv.domain.errors import PolarGuardError

EARTH_RADIUS_KM = 6371.0088
KM_PER_DEGREE = EARTH_RADIUS_KM * math.pi / 180.0
POLAR_LIMIT_DEG = 89.9


def guard_polar(lat: float) -> None:
    if abs(lat) > POLAR_LIMIT_DEG:
        raise PolarGuardError(f"latitude {lat} beyond +/-{POLAR_LIMIT_DEG}; longitude scale degenerates")


def step(origin: Point, distance_km: float, bearing_rad: float) -> Point:
    """Move `distance_km` from `origin` along `bearing_rad` (0 = north, clockwise)."""
    guard_polar(origin.lat)
    dlat = (distance_km / EARTH_RADIUS_KM) * math.cos(bearing_rad) * (180.0 / math.pi)
    dlon = (distance_km / (EARTH_RADIUS_KM * math.cos(math.radians(origin.lat)))) * math.sin(bearing_rad) * (
        180.0 / math.pi
    )
    return Point(origin.lat + dlat, origin.lon + dlon)


def distance_km(origin: Point, lats, lons):
    """Equirectangular distance from `origin` to one or many points."""
    dy = (np.asarray(lats, dtype=np.float64) - origin.lat) * KM_PER_DEGREE
    dx = (np.asarray(lons, dtype=np.float64) - origin.lon) * KM_PER_DEGREE * math.cos(math.radians(origin.lat))
    return np.hypot(dx, dy)


def degree_span(origin: Point, radius_km: float) -> tuple:
    """(dlat, dlon) half-widths of the bounding box of a disk around `origin`."""
    guard_polar(origin.lat)
    dlat = radius_km / KM_PER_DEGREE
    return dlat, dlat / math.cos(math.radians(origin.lat))
