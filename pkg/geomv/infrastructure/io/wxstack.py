"""Binary `.wxstack` daily grid stacks.

Layout (little-endian): magic ``WXS1``; u32 n_cols, u32 n_rows, f64 x_ll,
f64 y_ll, f64 cell_size, f64 nodata, u32 n_days, i64 start date (days since
1970-01-01), u8 variable code; then n_days x n_rows x n_cols float32 values,
day-major, row-major.
"""

from __future__ import annotations

import struct
from datetime import date, timedelta
from pathlib import Path
from typing import Union

import numpy as np

from geomv.domain.entities.raster import GridGeoref, GridStack, Variable
from geomv.domain.errors import FormatError, ShapeError

MAGIC = b"WXS1"
_HEADER = struct.Struct("<IIddddIqB")
EPOCH = date(1970, 1, 1)


def read_stack(path: Union[str, Path]) -> GridStack:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 4 + _HEADER.size:
        raise ShapeError(f"{path}: truncated header")
    n_cols, n_rows, x_ll, y_ll, cell_size, nodata, n_days, start, code = _HEADER.unpack_from(raw, 4)
    if n_days == 0:
        raise ShapeError(f"{path}: stack holds zero days")
    try:
        variable = Variable.from_code(code)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None

    count = n_days * n_rows * n_cols
    payload = raw[4 + _HEADER.size:]
    if len(payload) != 4 * count:
        raise ShapeError(f"{path}: expected {4 * count} payload bytes, found {len(payload)}")
    stored = np.frombuffer(payload, dtype="<f4", count=count)
    values = stored.astype(np.float64)
    # Sentinels that do not survive the float32 round trip are mapped back exactly
    values[stored == np.float32(nodata)] = nodata

    georef = GridGeoref(n_cols, n_rows, x_ll, y_ll, cell_size, nodata)
    return GridStack(
        georef, EPOCH + timedelta(days=start), values.reshape(n_days, n_rows, n_cols), variable
    )


def write_stack(stack: GridStack, path: Union[str, Path]) -> None:
    if stack.n_days == 0:
        raise ShapeError("refusing to write an empty stack")
    g = stack.georef
    header = _HEADER.pack(
        g.n_cols,
        g.n_rows,
        g.x_ll,
        g.y_ll,
        g.cell_size,
        g.nodata,
        stack.n_days,
        (stack.start_date - EPOCH).days,
        stack.variable.code,
    )
    payload = np.ascontiguousarray(stack.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        fh.write(payload)
