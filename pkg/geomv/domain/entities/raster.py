from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import FrozenSet, Tuple

import numpy as np

from geomv.domain.errors import OutOfExtentError, ShapeError


class Variable(str, Enum):
    PRECIPITATION_MM = "precipitation_mm"
    TEMPERATURE_C = "temperature_c"

    @property
    def code(self) -> int:
        return 0 if self is Variable.PRECIPITATION_MM else 1

    @classmethod
    def from_code(cls, code: int) -> "Variable":
        if code == 0:
            return cls.PRECIPITATION_MM
        if code == 1:
            return cls.TEMPERATURE_C
        raise ValueError(f"unknown variable code {code}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def nodata_mask(values: np.ndarray, nodata: float) -> np.ndarray:
    """Boolean mask of cells equal to the nodata sentinel (NaN sentinels match NaN)."""
    if math.isnan(nodata):
        return np.isnan(values)
    return values == nodata


@dataclass(frozen=True)
class GridGeoref:
    """Corner-anchored geographic grid; row 0 is the northernmost row."""

    n_cols: int
    n_rows: int
    x_ll: float
    y_ll: float
    cell_size: float
    nodata: float = -9999.0

    def __post_init__(self):
        if self.n_cols < 1 or self.n_rows < 1:
            raise ShapeError(f"grid must have at least one row and column, got {self.n_rows}x{self.n_cols}")
        if not self.cell_size > 0:
            raise ShapeError(f"cell_size must be positive, got {self.cell_size}")
        if self.y_ll < -90.0 or self.y_top > 90.0:
            raise ShapeError(f"latitude extent [{self.y_ll}, {self.y_top}] outside [-90, 90]")
        if not (-360.0 < self.x_ll and self.x_right < 360.0):
            raise ShapeError(f"longitude extent [{self.x_ll}, {self.x_right}] outside (-360, 360)")

    @property
    def x_right(self) -> float:
        return self.x_ll + self.n_cols * self.cell_size

    @property
    def y_top(self) -> float:
        return self.y_ll + self.n_rows * self.cell_size

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def center(self, row: int, col: int) -> Tuple[float, float]:
        """(lat, lon) of the center of cell (row, col)."""
        lon = self.x_ll + (col + 0.5) * self.cell_size
        lat = self.y_ll + (self.n_rows - 1 - row + 0.5) * self.cell_size
        return lat, lon

    def center_lats(self) -> np.ndarray:
        rows = np.arange(self.n_rows)
        return self.y_ll + (self.n_rows - 1 - rows + 0.5) * self.cell_size

    def center_lons(self) -> np.ndarray:
        return self.x_ll + (np.arange(self.n_cols) + 0.5) * self.cell_size

    def contains(self, lat: float, lon: float) -> bool:
        return self.x_ll <= lon <= self.x_right and self.y_ll <= lat <= self.y_top

    def cell_of(self, lat: float, lon: float) -> Tuple[int, int]:
        """Cell containing (lat, lon).

        Points on a shared edge go to the cell with the larger row/column index,
        i.e. the eastern column and the southern row. The outer extent boundary
        is inclusive.
        """
        if not self.contains(lat, lon):
            raise OutOfExtentError(f"point ({lat}, {lon}) outside grid extent")
        fx = (lon - self.x_ll) / self.cell_size
        col = min(int(math.floor(fx)), self.n_cols - 1)

        fy = (lat - self.y_ll) / self.cell_size
        south_idx = int(math.floor(fy))
        if south_idx == fy and south_idx > 0:
            south_idx -= 1
        south_idx = min(south_idx, self.n_rows - 1)
        return self.n_rows - 1 - south_idx, col

    def bounds(self) -> Tuple[float, float, float, float]:
        """(min_lon, min_lat, max_lon, max_lat)."""
        return self.x_ll, self.y_ll, self.x_right, self.y_top


@dataclass(frozen=True)
class GridRaster:
    georef: GridGeoref
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        expected = self.georef.n_rows * self.georef.n_cols
        if values.size != expected:
            raise ShapeError(f"expected {expected} values, got {values.size}")
        values = values.reshape(self.georef.shape)
        bad = ~np.isfinite(values) & ~nodata_mask(values, self.georef.nodata)
        if bad.any():
            raise ShapeError("raster values must be finite or equal to the nodata sentinel")
        object.__setattr__(self, "values", _frozen(values))

    def value_at(self, row: int, col: int) -> float:
        return float(self.values[row, col])

    def is_nodata(self, row: int, col: int) -> bool:
        return bool(nodata_mask(self.values[row, col], self.georef.nodata))


@dataclass(frozen=True)
class GridStack:
    georef: GridGeoref
    start_date: date
    values: np.ndarray
    variable: Variable = Variable.PRECIPITATION_MM

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 2 and values.shape[1] == self.georef.n_rows * self.georef.n_cols:
            values = values.reshape((values.shape[0],) + self.georef.shape)
        if values.ndim != 3 or values.shape[1:] != self.georef.shape:
            raise ShapeError(f"stack values must be (n_days, {self.georef.n_rows}, {self.georef.n_cols})")
        if values.shape[0] == 0:
            raise ShapeError("stack must hold at least one day")
        bad = ~np.isfinite(values) & ~nodata_mask(values, self.georef.nodata)
        if bad.any():
            raise ShapeError("stack values must be finite or equal to the nodata sentinel")
        object.__setattr__(self, "variable", Variable(self.variable))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n_days(self) -> int:
        return int(self.values.shape[0])

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=self.n_days - 1)

    def day(self, index: int) -> GridRaster:
        return GridRaster(self.georef, self.values[index])

    def covers(self, start: date, end: date) -> bool:
        return self.start_date <= start and end <= self.end_date

    def window(self, start: date, end: date) -> "GridStack":
        """Sub-stack restricted to [start, end]."""
        if not self.covers(start, end):
            raise ShapeError(f"stack covers {self.start_date}..{self.end_date}, not {start}..{end}")
        i0 = (start - self.start_date).days
        i1 = (end - self.start_date).days + 1
        return GridStack(self.georef, start, self.values[i0:i1], self.variable)


@dataclass(frozen=True)
class DailySeries:
    feature_id: str
    start_date: date
    values: np.ndarray
    flags: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(values).all():
            raise ShapeError(f"series {self.feature_id} holds non-finite values")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def n_days(self) -> int:
        return int(self.values.size)

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=self.n_days - 1)

    def dates(self) -> np.ndarray:
        return np.arange(
            np.datetime64(self.start_date, "D"), np.datetime64(self.end_date, "D") + 1
        )

    def between(self, start: date, end: date) -> np.ndarray:
        i0 = (start - self.start_date).days
        i1 = (end - self.start_date).days + 1
        if i0 < 0 or i1 > self.n_days:
            raise ShapeError(f"series {self.feature_id} does not cover {start}..{end}")
        return self.values[i0:i1]
