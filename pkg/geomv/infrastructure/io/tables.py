"""Text and columnar codecs for households, polygons, features, series, metrics and outcomes."""

from __future__ import annotations

import re
import struct
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np
import pandas as pd
import shapely.wkt
from shapely.geometry import Polygon as ShapelyPolygon

from geomv.domain.entities.feature import Disk, Method, PolygonGeom, SpatialFeature
from geomv.domain.entities.household import AdminPolygon, Household, Point
from geomv.domain.entities.raster import DailySeries, Variable
from geomv.domain.errors import FormatError, ParseError, ShapeError

PathLike = Union[str, Path]

HOUSEHOLD_COLUMNS = ["household_id", "ea_id", "admin_id", "lat", "lon", "stratum", "season_region"]
FEATURE_COLUMNS = ["feature_id", "household_id", "method", "geom_wkt_like"]
OUTCOME_COLUMNS = ["household_id", "year", "yield", "harvest_value"]
FLOAT_FORMAT = "%.17g"


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], path: PathLike) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}", line=1)


# ---------- households ----------


def read_households(path: PathLike) -> List[Household]:
    frame = pd.read_csv(path, dtype={"household_id": str, "ea_id": str, "admin_id": str})
    _require_columns(frame, HOUSEHOLD_COLUMNS, path)
    out = []
    for lineno, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            out.append(
                Household(
                    household_id=row.household_id,
                    ea_id=row.ea_id,
                    admin_id=row.admin_id,
                    lat=float(row.lat),
                    lon=float(row.lon),
                    stratum=str(row.stratum).strip().lower(),
                    season_region=str(row.season_region).strip().lower(),
                )
            )
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=lineno) from None
    return out


def write_households(households: Iterable[Household], path: PathLike) -> None:
    rows = [
        (h.household_id, h.ea_id, h.admin_id, h.lat, h.lon, h.stratum.value, h.season_region.value)
        for h in households
    ]
    pd.DataFrame(rows, columns=HOUSEHOLD_COLUMNS).to_csv(path, index=False, float_format=FLOAT_FORMAT)


# ---------- admin polygons: admin_id;lon lat,lon lat,...;hole ring... ----------


def _parse_ring(text: str, lineno: int):
    ring = []
    for pair in text.strip().strip("[]").split(","):
        parts = pair.split()
        if len(parts) != 2:
            raise ParseError("vertex must be 'lon lat'", line=lineno, token=pair.strip())
        try:
            ring.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ParseError("non-numeric vertex", line=lineno, token=pair.strip()) from None
    return tuple(ring)


def read_polygons(path: PathLike) -> List[AdminPolygon]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(";")
        if len(parts) < 2 or not parts[0].strip():
            raise ParseError("expected 'admin_id;ring[;hole...]'", line=lineno)
        rings = tuple(_parse_ring(p, lineno) for p in parts[1:] if p.strip())
        out.append(AdminPolygon(parts[0].strip(), rings))
    return out


def _ring_text(ring) -> str:
    return ",".join(f"{x!r} {y!r}" for x, y in ring)


def write_polygons(polygons: Iterable[AdminPolygon], path: PathLike) -> None:
    lines = [";".join([p.admin_id] + [_ring_text(r) for r in p.rings]) for p in polygons]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------- features ----------

_POINT_RE = re.compile(r"^POINT \(([^ ]+) ([^ )]+)\)$")
_DISK_RE = re.compile(r"^DISK \(([^ ]+) ([^,]+), ([^ )]+)\)$")


def geometry_to_text(geometry) -> str:
    if isinstance(geometry, Point):
        return f"POINT ({geometry.lon!r} {geometry.lat!r})"
    if isinstance(geometry, Disk):
        return f"DISK ({geometry.center.lon!r} {geometry.center.lat!r}, {geometry.radius_km!r})"
    if isinstance(geometry, PolygonGeom):
        return "POLYGON (" + ", ".join(
            "(" + ", ".join(f"{x!r} {y!r}" for x, y in ring) + ")" for ring in geometry.rings
        ) + ")"
    raise FormatError(f"unsupported geometry {type(geometry).__name__}")


def geometry_from_text(text: str, lineno: int = 0):
    text = text.strip()
    try:
        m = _POINT_RE.match(text)
        if m:
            return Point(lat=float(m.group(2)), lon=float(m.group(1)))
        m = _DISK_RE.match(text)
        if m:
            return Disk(Point(lat=float(m.group(2)), lon=float(m.group(1))), float(m.group(3)))
        if text.startswith("POLYGON"):
            shape = shapely.wkt.loads(text)
            if not isinstance(shape, ShapelyPolygon):
                raise ValueError("not a polygon")
            rings = [tuple(shape.exterior.coords)] + [tuple(r.coords) for r in shape.interiors]
            return PolygonGeom(tuple(tuple((float(x), float(y)) for x, y in r) for r in rings))
    except (ValueError, shapely.errors.ShapelyError):
        pass
    raise ParseError("unreadable geometry", line=lineno, token=text[:40])


def write_features(features: Iterable[SpatialFeature], path: PathLike) -> None:
    rows = [(f.feature_id, f.household_id, f.method.value, geometry_to_text(f.geometry)) for f in features]
    pd.DataFrame(rows, columns=FEATURE_COLUMNS).to_csv(path, index=False)


def read_features(path: PathLike) -> List[SpatialFeature]:
    frame = pd.read_csv(path, dtype=str)
    _require_columns(frame, FEATURE_COLUMNS, path)
    return [
        SpatialFeature(row.feature_id, row.household_id, Method(row.method), geometry_from_text(row.geom_wkt_like, i))
        for i, row in enumerate(frame.itertuples(index=False), start=2)
    ]


# ---------- extracted series ----------


def series_frame(series: Iterable[DailySeries]) -> pd.DataFrame:
    parts = []
    for s in series:
        parts.append(
            pd.DataFrame({"feature_id": s.feature_id, "date": s.dates().astype(str), "value": s.values})
        )
    if not parts:
        return pd.DataFrame(columns=["feature_id", "date", "value"])
    return pd.concat(parts, ignore_index=True)


def write_series_csv(series: Iterable[DailySeries], path: PathLike) -> None:
    series_frame(series).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_series_csv(path: PathLike) -> Dict[str, DailySeries]:
    frame = pd.read_csv(path, dtype={"feature_id": str, "date": str})
    _require_columns(frame, ["feature_id", "date", "value"], path)
    out = {}
    for feature_id, rows in frame.groupby("feature_id", sort=False):
        days = pd.to_datetime(rows["date"]).dt.date.tolist()
        expected = [days[0] + timedelta(days=i) for i in range(len(days))]
        if days != expected:
            raise ShapeError(f"{path}: dates for {feature_id} are not consecutive")
        out[feature_id] = DailySeries(feature_id, days[0], rows["value"].to_numpy(dtype=np.float64))
    return out


SERIES_MAGIC = b"WXR1"
_SERIES_HEADER = struct.Struct("<IIqB")
EPOCH = date(1970, 1, 1)


def write_series_binary(series: Sequence[DailySeries], path: PathLike, variable: Variable) -> None:
    """Columnar series file: one float64 column per feature, sharing one date range."""
    if not series:
        raise ShapeError("refusing to write an empty series file")
    start, n_days = series[0].start_date, series[0].n_days
    if any(s.start_date != start or s.n_days != n_days for s in series):
        raise ShapeError("all series in one file must share the date range")
    with open(path, "wb") as fh:
        fh.write(SERIES_MAGIC)
        fh.write(_SERIES_HEADER.pack(len(series), n_days, (start - EPOCH).days, Variable(variable).code))
        for s in series:
            ident = s.feature_id.encode("utf-8")
            flags = ",".join(sorted(s.flags)).encode("utf-8")
            fh.write(struct.pack("<HH", len(ident), len(flags)))
            fh.write(ident)
            fh.write(flags)
        fh.write(np.stack([s.values for s in series]).astype("<f8").tobytes())


def read_series_binary(path: PathLike) -> Dict[str, DailySeries]:
    raw = Path(path).read_bytes()
    if raw[:4] != SERIES_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    n_series, n_days, start, _code = _SERIES_HEADER.unpack_from(raw, 4)
    offset = 4 + _SERIES_HEADER.size
    idents = []
    for _ in range(n_series):
        n_ident, n_flags = struct.unpack_from("<HH", raw, offset)
        offset += 4
        ident = raw[offset:offset + n_ident].decode("utf-8")
        offset += n_ident
        flags = raw[offset:offset + n_flags].decode("utf-8")
        offset += n_flags
        idents.append((ident, frozenset(f for f in flags.split(",") if f)))
    payload = raw[offset:]
    if len(payload) != 8 * n_series * n_days:
        raise ShapeError(f"{path}: truncated series payload")
    block = np.frombuffer(payload, dtype="<f8").reshape(n_series, n_days)
    start_date = EPOCH + timedelta(days=start)
    return {
        ident: DailySeries(ident, start_date, block[i].copy(), flags)
        for i, (ident, flags) in enumerate(idents)
    }


# ---------- outcomes ----------


def read_outcomes(path: PathLike) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"household_id": str})
    _require_columns(frame, OUTCOME_COLUMNS, path)
    frame["year"] = frame["year"].astype(int)
    negative = (frame[["yield", "harvest_value"]] < 0).any(axis=1)
    if negative.any():
        first = int(np.flatnonzero(negative.to_numpy())[0])
        raise ParseError(f"{path}: outcomes must be non-negative", line=first + 2)
    if frame.duplicated(["household_id", "year"]).any():
        raise ParseError(f"{path}: duplicate (household_id, year) rows")
    return frame[OUTCOME_COLUMNS]


def write_outcomes(frame: pd.DataFrame, path: PathLike) -> None:
    frame[OUTCOME_COLUMNS].to_csv(path, index=False, float_format=FLOAT_FORMAT)
