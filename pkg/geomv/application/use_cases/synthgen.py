"""Synthetic weather, populations and outcome panels with known ground truth.

All randomness comes from substreams of ``SynthConfig.seed`` keyed by what is
being drawn (weather per variable and per day, population, outcomes), so any
part can be regenerated independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from geomv.application.dto.manifest import SynthConfig, SynthProduct
from geomv.application.use_cases.extraction import ExtractionService
from geomv.application.use_cases.season_metrics import series_metrics, wide_table
from geomv.domain.entities.feature import Method, SpatialFeature, feature_id_for
from geomv.domain.entities.household import AdminPolygon, Household, Point, SeasonRegion, Stratum
from geomv.domain.entities.raster import DailySeries, GridGeoref, GridStack, Variable
from geomv.domain.entities.season import CALENDARS, GddBounds
from geomv.domain.errors import ConfigError
from geomv.domain.geodesy import KM_PER_DEGREE, step
from geomv.logging_config import logger

_WEATHER, _POPULATION, _OUTCOMES = 1, 2, 3


def _stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *tags]))


@dataclass(frozen=True)
class GroundTruth:
    """Outcome components per household-year; asinh(y) = intercept + alpha_h + gamma_t + b1 w + b2 w^2 + eps."""

    alpha_h: Dict[str, float]
    gamma_t: Dict[int, float]
    components: pd.DataFrame
    metrics: Optional[pd.DataFrame] = None
    series: Dict[str, DailySeries] = field(default_factory=dict)


@dataclass
class SynthFixture:
    config: SynthConfig
    stacks: Dict[str, GridStack]
    households: Dict[str, List[Household]]
    polygons: Dict[str, List[AdminPolygon]]
    panels: Dict[str, pd.DataFrame]
    truth: Dict[str, GroundTruth]


# ---------- weather ----------


def record_dates(config: SynthConfig) -> Tuple[date, date]:
    return date(config.first_year, 1, 1), date(config.last_year, 12, 31)


def fine_georef(config: SynthConfig) -> GridGeoref:
    cs = config.finest
    n_cols = round(config.strip_width_deg * len(config.countries) / cs)
    n_rows = round(config.height_deg / cs)
    if not math.isclose(n_cols * cs, config.strip_width_deg * len(config.countries), rel_tol=1e-9) or not math.isclose(
        n_rows * cs, config.height_deg, rel_tol=1e-9
    ):
        raise ConfigError(f"domain is not a whole number of {cs} degree cells")
    return GridGeoref(n_cols, n_rows, config.x_ll, config.y_ll, cs)


def block_factor(product: SynthProduct, fine: GridGeoref) -> int:
    factor = round(product.cell_size / fine.cell_size)
    if not math.isclose(factor * fine.cell_size, product.cell_size, rel_tol=1e-9):
        raise ConfigError(f"product {product.name}: cell size {product.cell_size} is not a multiple of {fine.cell_size}")
    if fine.n_cols % factor or fine.n_rows % factor:
        raise ConfigError(f"product {product.name}: domain does not divide into {product.cell_size} degree cells")
    return factor


def block_average(values: np.ndarray, factor: int) -> np.ndarray:
    """Mean over factor x factor blocks of a (n_days, rows, cols) array."""
    if factor == 1:
        return values.copy()
    n_days, rows, cols = values.shape
    return values.reshape(n_days, rows // factor, factor, cols // factor, factor).mean(axis=(2, 4))


def _seasonal(start: date, n_days: int) -> np.ndarray:
    ordinals = start.toordinal() + np.arange(n_days)
    doy = np.array([date.fromordinal(int(o)).timetuple().tm_yday for o in ordinals])
    return np.sin(2.0 * math.pi * (doy - 80) / 365.25)


def _basis(config: SynthConfig, georef: GridGeoref, rng: np.random.Generator) -> np.ndarray:
    """Low-frequency sinusoids over the grid, shape (n_basis, rows, cols)."""
    k = config.n_basis
    if k == 0:
        return np.zeros((0,) + georef.shape)
    mid_lat = georef.y_ll + georef.n_rows * georef.cell_size / 2.0
    y_km = (georef.center_lats() - georef.y_ll) * KM_PER_DEGREE
    x_km = (georef.center_lons() - georef.x_ll) * KM_PER_DEGREE * math.cos(math.radians(mid_lat))
    xx, yy = np.meshgrid(x_km, y_km)
    directions = rng.uniform(0.0, 2.0 * math.pi, k)
    wavelengths = config.correlation_km * rng.uniform(1.0, 2.0, k)
    phases = rng.uniform(0.0, 2.0 * math.pi, k)
    out = np.empty((k,) + georef.shape)
    for i in range(k):
        arg = (np.cos(directions[i]) * xx + np.sin(directions[i]) * yy) / wavelengths[i]
        out[i] = math.sqrt(2.0 / k) * np.cos(2.0 * math.pi * arg + phases[i])
    return out


def gen_field(config: SynthConfig, georef: GridGeoref, variable: Variable) -> np.ndarray:
    """Daily field: climatology + AR(1)-weighted sinusoid basis + white noise."""
    variable = Variable(variable)
    start, end = record_dates(config)
    n_days = (end - start).days + 1
    season = _seasonal(start, n_days)
    if variable is Variable.PRECIPITATION_MM:
        climatology = config.rain_mean_mm * (1.0 + config.seasonal_amplitude * season)
    else:
        climatology = config.temp_mean_c + 5.0 * config.seasonal_amplitude * season

    basis = _basis(config, georef, _stream(config.seed, _WEATHER, variable.code))
    rho = config.ar1
    coeffs = np.zeros((n_days, config.n_basis))
    noise = np.empty((n_days,) + georef.shape)
    for t in range(n_days):
        day_rng = _stream(config.seed, _WEATHER, variable.code, t + 1)
        innovation = day_rng.standard_normal(config.n_basis)
        coeffs[t] = innovation if t == 0 else rho * coeffs[t - 1] + math.sqrt(1.0 - rho * rho) * innovation
        noise[t] = day_rng.standard_normal(georef.shape)

    values = climatology[:, None, None] + config.weather_noise_sd * noise
    if config.n_basis:
        values = values + config.spatial_amplitude * np.tensordot(coeffs, basis, axes=(1, 0))
    if variable is Variable.PRECIPITATION_MM:
        values = np.clip(values, 0.0, None)
    return values


def gen_weather(config: SynthConfig) -> Dict[str, GridStack]:
    """One stack per pseudo-product; coarser products are block averages of the finest field."""
    fine = fine_georef(config)
    start, _ = record_dates(config)
    fields: Dict[Variable, np.ndarray] = {}
    stacks = {}
    for product in config.products:
        factor = block_factor(product, fine)
        if product.variable not in fields:
            fields[product.variable] = gen_field(config, fine, product.variable)
        georef = GridGeoref(fine.n_cols // factor, fine.n_rows // factor, fine.x_ll, fine.y_ll, product.cell_size)
        stacks[product.name] = GridStack(
            georef, start, block_average(fields[product.variable], factor), product.variable
        )
    logger.info(f"synth weather: {len(stacks)} products on a {fine.n_rows}x{fine.n_cols} fine grid")
    return stacks


# ---------- population ----------


def _tile_ring(x0: float, y0: float, x1: float, y1: float):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0))


def gen_population(config: SynthConfig) -> Tuple[Dict[str, List[Household]], Dict[str, List[AdminPolygon]]]:
    """Households clustered around EA centers inside rectangular admin tiles, one strip per country."""
    rng = _stream(config.seed, _POPULATION)
    households: Dict[str, List[Household]] = {}
    polygons: Dict[str, List[AdminPolygon]] = {}
    tile_w = config.strip_width_deg / config.admin_cols
    tile_h = config.height_deg / config.admin_rows
    # EA centers keep clear of tile edges by more than any mask offset
    top_lat = max(abs(config.y_ll), abs(config.y_ll + config.height_deg))
    margin_lat = max(0.1 * tile_h, config.edge_buffer_km / KM_PER_DEGREE)
    margin_lon = max(0.1 * tile_w, config.edge_buffer_km / (KM_PER_DEGREE * math.cos(math.radians(top_lat))))
    if 2 * margin_lat >= tile_h or 2 * margin_lon >= tile_w:
        raise ConfigError(f"admin tiles are too small for an edge buffer of {config.edge_buffer_km} km")
    for ci, country in enumerate(config.countries):
        x0 = config.x_ll + ci * config.strip_width_deg
        y0 = config.y_ll
        mid_lat = y0 + config.height_deg / 2.0
        bimodal = SeasonRegion.NORTH in CALENDARS[country].regions

        tiles = []
        for r in range(config.admin_rows):
            for c in range(config.admin_cols):
                bounds = (x0 + c * tile_w, y0 + r * tile_h, x0 + (c + 1) * tile_w, y0 + (r + 1) * tile_h)
                admin = AdminPolygon(f"{country}-a{len(tiles):02d}", (_tile_ring(*bounds),))
                tiles.append((admin, bounds))
        polygons[country] = [t[0] for t in tiles]

        members: List[Household] = []
        for e in range(config.n_eas):
            admin, (bx0, by0, bx1, by1) = tiles[e % len(tiles)]
            stratum = Stratum.URBAN if rng.random() < config.urban_share else Stratum.RURAL
            center = Point(rng.uniform(by0 + margin_lat, by1 - margin_lat), rng.uniform(bx0 + margin_lon, bx1 - margin_lon))
            eps = 1e-9 * min(tile_w, tile_h)
            ea_id = f"{country}-e{e:03d}"
            for k in range(config.households_per_ea):
                radius = config.ea_spread_km * math.sqrt(rng.random())
                p = step(center, radius, rng.uniform(0.0, 2.0 * math.pi))
                lat = min(max(p.lat, by0 + eps), by1 - eps)
                lon = min(max(p.lon, bx0 + eps), bx1 - eps)
                if bimodal:
                    region = SeasonRegion.NORTH if lat >= mid_lat else SeasonRegion.SOUTH
                else:
                    region = SeasonRegion.UNIMODAL
                members.append(Household(f"{ea_id}-h{k:02d}", ea_id, admin.admin_id, lat, lon, stratum, region))
        households[country] = members
    return households, polygons


# ---------- outcomes ----------


def gen_outcomes(config: SynthConfig, true_metrics: pd.DataFrame, salt: int = 0) -> Tuple[pd.DataFrame, GroundTruth]:
    """Outcome panel from true weather (columns household_id, year, weather)."""
    rng = _stream(config.seed, _OUTCOMES, salt)
    frame = true_metrics[["household_id", "year", "weather"]].sort_values(["household_id", "year"]).reset_index(drop=True)
    hh = sorted(frame["household_id"].unique())
    years = sorted(int(y) for y in frame["year"].unique())
    alpha = dict(zip(hh, rng.normal(0.0, config.household_sd, len(hh)).tolist()))
    gamma = dict(zip(years, rng.normal(0.0, config.year_sd, len(years)).tolist()))
    eps_yield = rng.normal(0.0, config.noise_sd, len(frame))
    eps_value = rng.normal(0.0, config.noise_sd, len(frame))

    w = frame["weather"].to_numpy(dtype=np.float64)
    a = frame["household_id"].map(alpha).to_numpy()
    g = frame["year"].map(gamma).to_numpy()
    signal = config.intercept + a + g + config.beta1 * w + config.beta2 * w**2
    asinh_yield = signal + eps_yield
    asinh_value = signal + config.value_shift + eps_value
    if (asinh_yield < 0).any() or (asinh_value < 0).any():
        raise ConfigError("synthetic outcomes went negative; raise the intercept or shrink the effects")

    components = frame.assign(
        alpha_h=a, gamma_t=g, eps_yield=eps_yield, eps_value=eps_value,
        asinh_yield=asinh_yield, asinh_value=asinh_value,
    )
    panel = pd.DataFrame(
        {
            "household_id": frame["household_id"],
            "year": frame["year"].astype(int),
            "yield": np.sinh(asinh_yield),
            "harvest_value": np.sinh(asinh_value),
        }
    )
    return panel, GroundTruth(alpha, gamma, components)


def truth_features(households: List[Household]) -> List[SpatialFeature]:
    return [
        SpatialFeature(feature_id_for(h.household_id, Method.HH_BILINEAR), h.household_id, Method.HH_BILINEAR, h.point)
        for h in households
    ]


def ground_truth_metrics(
    config: SynthConfig, stack: GridStack, country: str, households: List[Household]
) -> Tuple[pd.DataFrame, Dict[str, DailySeries]]:
    """True seasonal metrics: hh_bilinear extraction on the truth product at exact coordinates."""
    features = truth_features(households)
    series = ExtractionService(stack).extract_all(features)
    regions = {f.feature_id: h.season_region for f, h in zip(features, households)}
    rows = series_metrics(series, CALENDARS[country], regions, stack.variable, GddBounds())
    table = wide_table(rows)
    metrics = table[["household_id", "harvest_year", config.truth_metric]].rename(
        columns={"harvest_year": "year", config.truth_metric: "weather"}
    )
    return metrics, {s.feature_id: s for s in series}


def build_fixture(config: SynthConfig) -> SynthFixture:
    stacks = gen_weather(config)
    households, polygons = gen_population(config)
    truth_stack = stacks[config.truth().name]
    panels: Dict[str, pd.DataFrame] = {}
    truth: Dict[str, GroundTruth] = {}
    for salt, country in enumerate(config.countries):
        metrics, series = ground_truth_metrics(config, truth_stack, country, households[country])
        panel, gt = gen_outcomes(config, metrics, salt)
        panels[country] = panel
        truth[country] = GroundTruth(gt.alpha_h, gt.gamma_t, gt.components, metrics, series)
    n_households = sum(len(v) for v in households.values())
    logger.info(f"synth fixture: {len(config.countries)} countries, {n_households} households")
    return SynthFixture(config, stacks, households, polygons, panels, truth)
