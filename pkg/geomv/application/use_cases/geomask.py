"""Spatial anonymization: the ten feature representations of each household."""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import shapely
from shapely.ops import nearest_points

from geomv.domain.entities.feature import (
    Disk,
    MaskParams,
    Method,
    PolygonGeom,
    SpatialFeature,
    feature_id_for,
)
from geomv.domain.entities.household import AdminPolygon, Household, Point, Stratum
from geomv.domain.errors import (
    DisplacementError,
    EmptyGroupError,
    GeometryError,
    GroupingError,
    MissingAdminError,
)
from geomv.domain.geodesy import distance_km, guard_polar, step
from geomv.logging_config import logger

MAX_REJECTION_DRAWS = 1000


def ea_center(households_in_ea: Sequence[Household]) -> Point:
    if not households_in_ea:
        raise EmptyGroupError("cannot take the center of an empty EA")
    ea_ids = {h.ea_id for h in households_in_ea}
    if len(ea_ids) > 1:
        raise GroupingError(f"households from several EAs passed as one: {sorted(ea_ids)}")
    lats = np.array([h.lat for h in households_in_ea])
    lons = np.array([h.lon for h in households_in_ea])
    return Point(float(lats.mean()), float(lons.mean()))


def max_offset_km(stratum: Stratum, params: MaskParams) -> float:
    """Largest offset a point of this stratum can receive (the known range)."""
    return params.urban_max_km if Stratum(stratum) is Stratum.URBAN else params.rural_extra_max_km


def displace(point: Point, stratum: Stratum, params: MaskParams, rng: np.random.Generator) -> Tuple[Point, float]:
    """Random offset: uniform bearing, uniform distance up to the stratum maximum."""
    guard_polar(point.lat)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    if Stratum(stratum) is Stratum.URBAN:
        d_max = params.urban_max_km
    else:
        d_max = params.rural_max_km
        if rng.random() < params.rural_extra_share:
            d_max = params.rural_extra_max_km
    d = float(rng.uniform(0.0, d_max)) if d_max > 0 else 0.0
    return step(point, d, theta), d


def ea_rng(seed: int, ea_id: str) -> np.random.Generator:
    """Independent generator for one EA, stable across runs and scheduling."""
    digest = int.from_bytes(hashlib.sha256(ea_id.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), digest]))


def polygon_centroid(polygon: AdminPolygon) -> Point:
    return centroid_with_flag(polygon)[0]


def centroid_with_flag(polygon: AdminPolygon) -> Tuple[Point, bool]:
    """Planar area-weighted centroid; snapped to the nearest ring point when it falls outside."""
    shape = polygon.shape
    if shape.area == 0.0:
        raise GeometryError(f"admin unit {polygon.admin_id}: zero-area polygon")
    c = shape.centroid
    if shapely.intersects_xy(shape, c.x, c.y):
        return Point(c.y, c.x), False
    nearest = nearest_points(shape.boundary, c)[0]
    return Point(nearest.y, nearest.x), True


def with_centroid(polygon: AdminPolygon) -> AdminPolygon:
    point, external = centroid_with_flag(polygon)
    return AdminPolygon(polygon.admin_id, polygon.rings, point, external)


def _group_by_ea(households: Iterable[Household]) -> "OrderedDict[str, List[Household]]":
    groups: "OrderedDict[str, List[Household]]" = OrderedDict()
    for h in households:
        groups.setdefault(h.ea_id, []).append(h)
    return groups


def _ea_stratum(ea_id: str, members: Sequence[Household]) -> Stratum:
    strata = {h.stratum for h in members}
    if len(strata) > 1:
        raise GroupingError(f"EA {ea_id} mixes strata {sorted(s.value for s in strata)}")
    return members[0].stratum


def _masked_center(
    ea_id: str, center: Point, stratum: Stratum, admin: Optional[AdminPolygon], params: MaskParams
) -> Tuple[Point, float]:
    rng = ea_rng(params.seed, ea_id)
    if not params.constrain_to_admin or admin is None:
        return displace(center, stratum, params, rng)
    for _ in range(MAX_REJECTION_DRAWS):
        moved, d = displace(center, stratum, params, rng)
        if admin.contains(moved):
            return moved, d
    raise DisplacementError(
        f"EA {ea_id}: no displacement inside admin unit {admin.admin_id} after {MAX_REJECTION_DRAWS} draws"
    )


def _ea_features(
    ea_id: str,
    members: Sequence[Household],
    polygons: Mapping[str, AdminPolygon],
    centroids: Mapping[str, Point],
    params: MaskParams,
) -> List[SpatialFeature]:
    center = ea_center(members)
    stratum = _ea_stratum(ea_id, members)
    admin = polygons.get(members[0].admin_id)
    moved, _ = _masked_center(ea_id, center, stratum, admin, params)
    zone = Disk(moved, max_offset_km(stratum, params))

    out: List[SpatialFeature] = []
    for h in members:
        polygon = polygons[h.admin_id]
        admin_center = centroids[h.admin_id]
        geometry = {
            Method.HH_SIMPLE: h.point,
            Method.HH_BILINEAR: h.point,
            Method.EA_SIMPLE: center,
            Method.EA_BILINEAR: center,
            Method.EA_MOD_SIMPLE: moved,
            Method.EA_MOD_BILINEAR: moved,
            Method.ADMIN_CENTER_SIMPLE: admin_center,
            Method.ADMIN_CENTER_BILINEAR: admin_center,
            Method.EA_ZONE: zone,
            Method.ADMIN_ZONE: PolygonGeom(polygon.rings),
        }
        for method in Method:
            out.append(SpatialFeature(feature_id_for(h.household_id, method), h.household_id, method, geometry[method]))
    return out


def build_features(
    households: Sequence[Household],
    admin_polygons: Iterable[AdminPolygon],
    params: MaskParams,
    parallelism: int = 1,
) -> List[SpatialFeature]:
    """Ten features per household, in input household order and method order.

    Each EA draws its displacement from its own substream of `params.seed`, so
    the result does not depend on `parallelism`.
    """
    polygons: Dict[str, AdminPolygon] = {p.admin_id: p for p in admin_polygons}
    for h in households:
        if h.admin_id not in polygons:
            raise MissingAdminError(h.admin_id)
    centroids = {
        admin_id: (p.centroid if p.centroid is not None else polygon_centroid(p)) for admin_id, p in polygons.items()
    }
    groups = _group_by_ea(households)

    def work(item):
        return _ea_features(item[0], item[1], polygons, centroids, params)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            per_ea = list(pool.map(work, groups.items()))
    else:
        per_ea = [work(item) for item in groups.items()]

    by_household: Dict[str, List[SpatialFeature]] = {}
    for chunk in per_ea:
        for feature in chunk:
            by_household.setdefault(feature.household_id, []).append(feature)
    features = [f for h in households for f in by_household[h.household_id]]
    logger.info(f"built {len(features)} features for {len(households)} households in {len(groups)} EAs")
    return features


def _reference_point(feature: SpatialFeature) -> Point:
    g = feature.geometry
    if isinstance(g, Disk):
        return g.center
    if isinstance(g, PolygonGeom):
        c = shapely.Polygon(g.rings[0], holes=list(g.rings[1:])).centroid
        return Point(c.y, c.x)
    return g


def displacement_summary(features: Iterable[SpatialFeature], households: Iterable[Household]) -> pd.DataFrame:
    """Distance (km) of each feature's reference point from the true household location.

    Zones are represented by their center. Grouped by method and stratum.
    """
    truth = {h.household_id: h for h in households}
    rows = []
    for f in features:
        h = truth[f.household_id]
        ref = _reference_point(f)
        rows.append((f.method.value, h.stratum.value, float(distance_km(h.point, ref.lat, ref.lon))))
    frame = pd.DataFrame(rows, columns=["method", "stratum", "distance_km"])
    order = {m.value: i for i, m in enumerate(Method)}
    summary = (
        frame.groupby(["method", "stratum"])["distance_km"]
        .agg(n="count", mean_km="mean", median_km="median", max_km="max")
        .reset_index()
    )
    summary["_order"] = summary["method"].map(order)
    return summary.sort_values(["_order", "stratum"]).drop(columns="_order").reset_index(drop=True)
