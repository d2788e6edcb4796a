from __future__ import annotations

from dataclasses import dataclass, field, fields
from datetime import date
from typing import Dict, FrozenSet, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from geomv.domain.entities.household import SeasonRegion
from geomv.domain.errors import ConfigError

RAIN_THRESHOLD_MM = 1.0


class MonthDay(NamedTuple):
    month: int
    day: int

    def in_year(self, year: int) -> date:
        return date(year, self.month, self.day)


SeasonWindow = Tuple[MonthDay, MonthDay]


@dataclass(frozen=True)
class SeasonCalendar:
    country: str
    regions: Mapping[SeasonRegion, SeasonWindow]
    crosses_year: bool = False

    def __post_init__(self):
        regions = {SeasonRegion(k): (MonthDay(*s), MonthDay(*e)) for k, (s, e) in dict(self.regions).items()}
        if not regions:
            raise ConfigError(f"calendar {self.country} defines no season window")
        if (SeasonRegion.NORTH in regions) != (SeasonRegion.SOUTH in regions):
            raise ConfigError(f"bimodal calendar {self.country} must define both north and south")
        for region, (start, end) in regions.items():
            # Raises for impossible dates such as 31 April
            start.in_year(2000), end.in_year(2000)
            crosses = end <= start
            if crosses != self.crosses_year:
                raise ConfigError(
                    f"calendar {self.country}/{region.value}: window {start}-{end} "
                    f"inconsistent with crosses_year={self.crosses_year}"
                )
        object.__setattr__(self, "regions", regions)

    def window(self, region: SeasonRegion) -> SeasonWindow:
        region = SeasonRegion(region)
        if region in self.regions:
            return self.regions[region]
        if SeasonRegion.UNIMODAL in self.regions:
            return self.regions[SeasonRegion.UNIMODAL]
        raise ConfigError(f"calendar {self.country} has no window for region {region.value}")

    def season_dates(self, region: SeasonRegion, start_year: int) -> Tuple[date, date]:
        start, end = self.window(region)
        end_year = start_year + 1 if self.crosses_year else start_year
        return start.in_year(start_year), end.in_year(end_year)


def _calendar(country: str, crosses: bool, **windows) -> SeasonCalendar:
    regions = {SeasonRegion(k): (MonthDay(*s), MonthDay(*e)) for k, (s, e) in windows.items()}
    return SeasonCalendar(country, regions, crosses)


# FAO crop-calendar growing seasons per country
CALENDARS: Dict[str, SeasonCalendar] = {
    "ethiopia": _calendar("ethiopia", False, unimodal=((3, 1), (11, 30))),
    "malawi": _calendar("malawi", True, unimodal=((10, 1), (4, 30))),
    "niger": _calendar("niger", False, unimodal=((6, 1), (11, 30))),
    "nigeria": _calendar("nigeria", False, north=((5, 1), (9, 30)), south=((3, 1), (8, 31))),
    "tanzania": _calendar("tanzania", True, unimodal=((11, 1), (4, 30))),
    "uganda": _calendar("uganda", False, north=((4, 1), (9, 30)), south=((2, 1), (7, 31))),
}


@dataclass(frozen=True)
class SeasonSlice:
    feature_id: str
    harvest_year: int
    start: date
    end: date
    values: np.ndarray
    max_values: Optional[np.ndarray] = None

    @property
    def length(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class GddBounds:
    base_c: float = 10.0
    cap_c: float = 30.0

    def __post_init__(self):
        if self.base_c > self.cap_c:
            raise ConfigError(f"GDD base {self.base_c} exceeds cap {self.cap_c}")


@dataclass(frozen=True)
class RainfallMetrics:
    mean_daily_mm: float
    median_daily_mm: float
    variance: float
    skew: float
    total_mm: float
    dev_total_mm: float
    z_total: float
    rain_days: int
    dev_rain_days: float
    no_rain_days: int
    dev_no_rain_days: float
    share_rain_days: float
    dev_share_rain_days: float
    max_dry_spell_days: int
    flags: FrozenSet[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class TemperatureMetrics:
    mean_c: float
    median_c: float
    variance: float
    skew: float
    gdd_days: int
    dev_gdd: float
    z_gdd: float
    mean_daily_max_c: float
    flags: FrozenSet[str] = field(default_factory=frozenset)


def metric_fields(cls) -> Tuple[str, ...]:
    return tuple(f.name for f in fields(cls) if f.name != "flags")


class Moments(NamedTuple):
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class LongRunStats:
    """Long-run mean and sample std (n-1) of seasonal aggregates for one feature."""

    feature_id: str
    aggregates: Mapping[str, Moments]

    def get(self, name: str) -> Moments:
        return self.aggregates.get(name, Moments(float("nan"), float("nan"), 0))


@dataclass(frozen=True)
class MetricRow:
    feature_id: str
    harvest_year: int
    values: Mapping[str, float]
    flags: FrozenSet[str] = field(default_factory=frozenset)
