"""Growing-season slicing and the 22 seasonal weather metrics."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from geomv.domain.entities.household import SeasonRegion
from geomv.domain.entities.lattice import Z_95
from geomv.domain.entities.raster import DailySeries, Variable
from geomv.domain.entities.season import (
    RAIN_THRESHOLD_MM,
    GddBounds,
    LongRunStats,
    MetricRow,
    Moments,
    RainfallMetrics,
    SeasonCalendar,
    SeasonSlice,
    TemperatureMetrics,
)
from geomv.domain.errors import InsufficientDataError
from geomv.domain.registry import RAINFALL, TEMPERATURE, family_of, load_registry, metric_names

FLAG_ZERO_VARIANCE = "zero_variance"
FLAG_DEGENERATE = "degenerate_variance"
FLAG_UNDEFINED_LONGRUN = "undefined_longrun"
FLAG_MAX_FROM_MEAN = "max_from_mean"


def slice_seasons(
    series: DailySeries,
    calendar: SeasonCalendar,
    region: SeasonRegion,
    max_series: Optional[DailySeries] = None,
) -> List[SeasonSlice]:
    """One slice per complete season inside the series; partial seasons are dropped."""
    slices = []
    for start_year in range(series.start_date.year - 1, series.end_date.year + 1):
        start, end = calendar.season_dates(region, start_year)
        if start < series.start_date or end > series.end_date:
            continue
        max_values = max_series.between(start, end) if max_series is not None else None
        slices.append(SeasonSlice(series.feature_id, end.year, start, end, series.between(start, end), max_values))
    if not slices:
        raise InsufficientDataError(
            f"series {series.feature_id} ({series.start_date}..{series.end_date}) "
            f"holds no complete {calendar.country} season"
        )
    return slices


def _moments(x: np.ndarray) -> Tuple[float, float, float, float, frozenset]:
    """Mean, median, population variance and population skew."""
    variance = float(x.var())
    if variance == 0.0:
        return float(x.mean()), float(np.median(x)), 0.0, 0.0, frozenset({FLAG_ZERO_VARIANCE})
    return float(x.mean()), float(np.median(x)), variance, float(stats.skew(x, bias=True)), frozenset()


def longest_run(mask: np.ndarray) -> int:
    """Length of the longest run of True values."""
    if not mask.any():
        return 0
    padded = np.concatenate(([0], mask.astype(np.int8), [0]))
    edges = np.flatnonzero(np.diff(padded))
    return int((edges[1::2] - edges[0::2]).max())


def rainfall_aggregates(values: np.ndarray) -> Dict[str, float]:
    rain_days = int((values >= RAIN_THRESHOLD_MM).sum())
    n = int(values.size)
    return {
        "total_mm": float(values.sum()),
        "rain_days": rain_days,
        "no_rain_days": n - rain_days,
        "share_rain_days": rain_days / n,
    }


def gdd_count(values: np.ndarray, bounds: GddBounds) -> int:
    return int(((values >= bounds.base_c) & (values <= bounds.cap_c)).sum())


def _deviation(value: float, moments: Moments, flags: set) -> Tuple[float, float]:
    """(raw deviation, z-score) of a seasonal aggregate against the long run."""
    if moments.n == 0 or np.isnan(moments.mean):
        raise InsufficientDataError("long-run statistics missing for aggregate")
    dev = float(value - moments.mean)
    if moments.n < 2 or np.isnan(moments.std):
        flags.add(FLAG_UNDEFINED_LONGRUN)
        return dev, 0.0
    if moments.std == 0.0:
        flags.add(FLAG_DEGENERATE)
        return dev, 0.0
    return dev, dev / moments.std


def rainfall_metrics(season: SeasonSlice, longrun: LongRunStats) -> RainfallMetrics:
    x = np.asarray(season.values, dtype=np.float64)
    mean, median, variance, skew, mflags = _moments(x)
    agg = rainfall_aggregates(x)
    flags = set(mflags)
    dev_total, z_total = _deviation(agg["total_mm"], longrun.get("total_mm"), flags)
    dev_rain, _ = _deviation(agg["rain_days"], longrun.get("rain_days"), set())
    dev_no_rain, _ = _deviation(agg["no_rain_days"], longrun.get("no_rain_days"), set())
    dev_share, _ = _deviation(agg["share_rain_days"], longrun.get("share_rain_days"), set())
    return RainfallMetrics(
        mean_daily_mm=mean,
        median_daily_mm=median,
        variance=variance,
        skew=skew,
        total_mm=agg["total_mm"],
        dev_total_mm=dev_total,
        z_total=z_total,
        rain_days=agg["rain_days"],
        dev_rain_days=dev_rain,
        no_rain_days=agg["no_rain_days"],
        dev_no_rain_days=dev_no_rain,
        share_rain_days=agg["share_rain_days"],
        dev_share_rain_days=dev_share,
        max_dry_spell_days=longest_run(x < RAIN_THRESHOLD_MM),
        flags=frozenset(flags),
    )


def temperature_metrics(
    season: SeasonSlice, longrun: LongRunStats, gdd_bounds: GddBounds = GddBounds()
) -> TemperatureMetrics:
    x = np.asarray(season.values, dtype=np.float64)
    mean, median, variance, skew, mflags = _moments(x)
    flags = set(mflags)
    gdd = gdd_count(x, gdd_bounds)
    dev_gdd, z_gdd = _deviation(gdd, longrun.get("gdd_days"), flags)
    if season.max_values is not None:
        mean_max = float(np.mean(season.max_values))
    else:
        mean_max = mean
        flags.add(FLAG_MAX_FROM_MEAN)
    return TemperatureMetrics(
        mean_c=mean,
        median_c=median,
        variance=variance,
        skew=skew,
        gdd_days=gdd,
        dev_gdd=dev_gdd,
        z_gdd=z_gdd,
        mean_daily_max_c=mean_max,
        flags=frozenset(flags),
    )


def compute_longrun(
    all_slices: Iterable[SeasonSlice], variable: Variable, gdd_bounds: GddBounds = GddBounds()
) -> Dict[str, LongRunStats]:
    """Per-feature mean and sample std (n-1) of the seasonal aggregates over every season."""
    per_feature: Dict[str, Dict[str, List[float]]] = defaultdict(lambda: defaultdict(list))
    rainfall = family_of(variable) == RAINFALL
    for season in all_slices:
        bucket = per_feature[season.feature_id]
        if rainfall:
            for name, value in rainfall_aggregates(np.asarray(season.values)).items():
                bucket[name].append(value)
        else:
            bucket["gdd_days"].append(gdd_count(np.asarray(season.values), gdd_bounds))

    out = {}
    for feature_id, bucket in per_feature.items():
        aggregates = {}
        for name, values in bucket.items():
            arr = np.asarray(values, dtype=np.float64)
            std = float(arr.std(ddof=1)) if arr.size > 1 else float("nan")
            aggregates[name] = Moments(float(arr.mean()), std, int(arr.size))
        out[feature_id] = LongRunStats(feature_id, aggregates)
    return out


def _registry_fields(family: str) -> List[Tuple[str, str]]:
    return [(m.name, m.field) for m in load_registry() if m.family == family]


def to_metric_row(feature_id: str, harvest_year: int, metrics) -> MetricRow:
    family = RAINFALL if isinstance(metrics, RainfallMetrics) else TEMPERATURE
    raw = asdict(metrics)
    values = {name: float(raw[field]) for name, field in _registry_fields(family)}
    return MetricRow(feature_id, harvest_year, values, metrics.flags)


def series_metrics(
    series: Sequence[DailySeries],
    calendar: SeasonCalendar,
    regions: Mapping[str, SeasonRegion],
    variable: Variable,
    gdd_bounds: GddBounds = GddBounds(),
    max_series: Optional[Mapping[str, DailySeries]] = None,
) -> List[MetricRow]:
    """Metric rows for every feature and season.

    `regions` maps feature_id to the household's season region. Long-run
    statistics come from every season in each feature's own record.
    """
    slices: List[SeasonSlice] = []
    for s in series:
        extra = max_series.get(s.feature_id) if max_series else None
        slices.extend(slice_seasons(s, calendar, regions.get(s.feature_id, SeasonRegion.UNIMODAL), extra))
    longrun = compute_longrun(slices, variable, gdd_bounds)
    source_flags = {s.feature_id: s.flags for s in series}
    rows = []
    for season in slices:
        lr = longrun[season.feature_id]
        if family_of(variable) == RAINFALL:
            m = rainfall_metrics(season, lr)
        else:
            m = temperature_metrics(season, lr, gdd_bounds)
        row = to_metric_row(season.feature_id, season.harvest_year, m)
        rows.append(MetricRow(row.feature_id, row.harvest_year, row.values, row.flags | source_flags[season.feature_id]))
    return rows


def long_table(rows: Iterable[MetricRow]) -> pd.DataFrame:
    """`feature_id,harvest_year,metric_name,value,flags`."""
    records = []
    for row in rows:
        flags = ";".join(sorted(row.flags))
        for name, value in row.values.items():
            records.append((row.feature_id, row.harvest_year, name, value, flags))
    return pd.DataFrame(records, columns=["feature_id", "harvest_year", "metric_name", "value", "flags"])


def wide_table(rows: Iterable[MetricRow]) -> pd.DataFrame:
    """One row per feature and harvest year with all 22 metric columns.

    Columns of the family a row does not belong to stay empty.
    """
    columns = list(metric_names())
    records = []
    for row in rows:
        household_id, _, method = row.feature_id.rpartition(":")
        record = {"feature_id": row.feature_id, "household_id": household_id, "method": method,
                  "harvest_year": row.harvest_year}
        record.update({name: row.values.get(name, np.nan) for name in columns})
        record["flags"] = ";".join(sorted(row.flags))
        records.append(record)
    return pd.DataFrame(records, columns=["feature_id", "household_id", "method", "harvest_year", *columns, "flags"])


def metric_summary(metric_table: pd.DataFrame, by: Sequence[str] = ("method", "harvest_year")) -> pd.DataFrame:
    """Mean and normal 95% interval of each metric across households, per group.

    `metric_table` is the long table with `method` (and optionally `product`)
    columns added.
    """
    keys = [k for k in by if k in metric_table.columns] + ["metric_name"]
    grouped = metric_table.groupby(keys, sort=True)["value"]
    out = grouped.agg(n="count", mean="mean", sd="std").reset_index()
    half = Z_95 * out["sd"] / np.sqrt(out["n"])
    out["ci_lo"] = out["mean"] - half
    out["ci_hi"] = out["mean"] + half
    return out

