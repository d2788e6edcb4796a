"""ESRI-style ASCII grid reader/writer.

Rows are written north to south (image convention), which is also the row
order of GridRaster.values, so no flipping happens on either side.
"""

from __future__ import annotations

from datetime import date, timedelta
from pathlib import Path
from typing import Dict, Union

import numpy as np

from geomv.domain.entities.raster import GridGeoref, GridRaster, GridStack, Variable
from geomv.domain.errors import ParseError, ShapeError

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
_CENTER_KEYS = {"xllcenter": "xllcorner", "yllcenter": "yllcorner"}


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _parse_header(lines) -> Dict[str, str]:
    header: Dict[str, str] = {}
    centered = set()
    for lineno, line in enumerate(lines[:6], start=1):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError("malformed header line", line=lineno)
        key = parts[0].lower()
        if key in _CENTER_KEYS:
            centered.add(key)
            key = _CENTER_KEYS[key]
        if key not in HEADER_KEYS or key in header:
            raise ParseError(f"unexpected header key {parts[0]!r}", line=lineno)
        header[key] = parts[1]
        header[f"_{key}_line"] = str(lineno)
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ParseError(f"missing header keys {missing}", line=min(len(lines), 6))
    header["_centered"] = ",".join(sorted(centered))
    return header


def _number(header: Dict[str, str], key: str, cast=float):
    try:
        return cast(header[key])
    except ValueError:
        raise ParseError(f"non-numeric {key}", line=int(header[f"_{key}_line"]), token=header[key]) from None


def read_ascii_grid(path: Union[str, Path]) -> GridRaster:
    """Read an ASCII grid; header keys are case-insensitive."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(lines) < 6:
        raise ParseError("truncated header", line=len(lines) + 1)
    header = _parse_header(lines)

    n_cols = _number(header, "ncols", int)
    n_rows = _number(header, "nrows", int)
    cell_size = _number(header, "cellsize")
    x_ll = _number(header, "xllcorner")
    y_ll = _number(header, "yllcorner")
    nodata = _number(header, "nodata_value")
    # Normalize cell-center registration to the corner anchor
    if "xllcenter" in header["_centered"]:
        x_ll -= cell_size / 2.0
    if "yllcenter" in header["_centered"]:
        y_ll -= cell_size / 2.0

    body = lines[6:]
    if len(body) != n_rows:
        raise ShapeError(f"expected {n_rows} data rows, found {len(body)}")
    tokens = []
    for offset, line in enumerate(body):
        row = line.split()
        if len(row) != n_cols:
            raise ShapeError(f"row {offset} has {len(row)} values, expected {n_cols}")
        tokens.extend(row)
    try:
        values = np.asarray(tokens, dtype=np.float64)
    except ValueError:
        for i, tok in enumerate(tokens):
            try:
                float(tok)
            except ValueError:
                raise ParseError("non-numeric value", line=7 + i // n_cols, token=tok) from None
        raise

    georef = GridGeoref(n_cols, n_rows, x_ll, y_ll, cell_size, nodata)
    return GridRaster(georef, values.reshape(n_rows, n_cols))


def write_ascii_grid(raster: GridRaster, path: Union[str, Path]) -> None:
    g = raster.georef
    out = [
        f"ncols {g.n_cols}",
        f"nrows {g.n_rows}",
        f"xllcorner {_fmt(g.x_ll)}",
        f"yllcorner {_fmt(g.y_ll)}",
        f"cellsize {_fmt(g.cell_size)}",
        f"NODATA_value {_fmt(g.nodata)}",
    ]
    for row in raster.values:
        out.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_ascii_stack(directory: Union[str, Path], variable: Variable) -> GridStack:
    """Daily stack from a directory of `YYYY-MM-DD.asc` grids covering consecutive days."""
    files = sorted(Path(directory).glob("*.asc"))
    if not files:
        raise ShapeError(f"{directory}: no .asc grids")
    try:
        days = [date.fromisoformat(f.stem) for f in files]
    except ValueError as exc:
        raise ParseError(f"{directory}: grid file names must be ISO dates ({exc})") from None
    expected = [days[0] + timedelta(days=i) for i in range(len(days))]
    if days != expected:
        raise ShapeError(f"{directory}: daily grids are not consecutive")
    rasters = [read_ascii_grid(f) for f in files]
    georef = rasters[0].georef
    if any(r.georef != georef for r in rasters[1:]):
        raise ShapeError(f"{directory}: daily grids disagree on georeference")
    return GridStack(georef, days[0], np.stack([r.values for r in rasters]), variable)


def write_ascii_stack(stack: GridStack, directory: Union[str, Path]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(stack.n_days):
        day = stack.start_date + timedelta(days=i)
        write_ascii_grid(stack.day(i), directory / f"{day.isoformat()}.asc")
