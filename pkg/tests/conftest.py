import os
import sys
import tempfile
from datetime import date

import numpy as np
import pandas as pd
import pytest

# Logs from the suite go to a scratch directory, not the checkout
os.environ.setdefault("GEOMV_LOG_DIR", os.path.join(tempfile.gettempdir(), "geomv-test-logs"))

# Ensure project root is on sys.path so tests can import `geomv`
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from geomv.application.dto.manifest import SynthConfig, SynthProduct
from geomv.application.use_cases.multiverse import PanelStore
from geomv.domain.entities.feature import Method
from geomv.domain.entities.household import AdminPolygon, Household, SeasonRegion, Stratum
from geomv.domain.entities.lattice import DesignLattice, Product
from geomv.domain.entities.raster import DailySeries, GridGeoref, GridRaster, GridStack, Variable
from geomv.domain.entities.regression import ALL_SPECS


def make_georef(n_cols=4, n_rows=3, x_ll=30.0, y_ll=0.0, cell_size=1.0, nodata=-9999.0):
    return GridGeoref(n_cols, n_rows, x_ll, y_ll, cell_size, nodata)


def affine_raster(georef, a=2.0, b=-3.0, c=5.0):
    """value = a*lon + b*lat + c evaluated at every cell center."""
    lats = georef.center_lats()[:, None]
    lons = georef.center_lons()[None, :]
    return GridRaster(georef, a * lons + b * lats + c)


def square(admin_id, x0, y0, x1, y1):
    return AdminPolygon(admin_id, (((x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)),))


def daily_series(values, start=date(2001, 1, 1), feature_id="h1:hh_simple"):
    return DailySeries(feature_id, start, np.asarray(values, dtype=np.float64))


RAIN = Product("rain_a", Variable.PRECIPITATION_MM)


def small_lattice(methods=(Method.HH_BILINEAR, Method.ADMIN_ZONE)):
    return DesignLattice(
        countries=("ethiopia",),
        products=(RAIN,),
        methods=tuple(methods),
        rainfall_metrics=("mean_daily_mm", "total_mm"),
        temperature_metrics=(),
        outcomes=("yield",),
        specs=ALL_SPECS,
    )


def small_store(rng, methods=(Method.HH_BILINEAR, Method.ADMIN_ZONE), n_households=25):
    households = [f"h{i:02d}" for i in range(n_households)]
    years = [2001, 2002, 2003]
    outcomes = pd.DataFrame(
        [(h, y, 0.0, 0.0) for h in households for y in years],
        columns=["household_id", "year", "yield", "harvest_value"],
    )
    metrics = {}
    truth = rng.gamma(2.0, 2.0, size=len(outcomes))
    for method in methods:
        noise = 0.0 if method is Method.HH_BILINEAR else rng.normal(0.0, 1.0, size=len(outcomes))
        metrics[("ethiopia", "rain_a", method.value)] = pd.DataFrame(
            {
                "household_id": outcomes["household_id"],
                "harvest_year": outcomes["year"],
                "mean_daily_mm": truth + noise,
                "total_mm": 275.0 * (truth + noise) + rng.normal(0.0, 5.0, size=len(outcomes)),
            }
        )
    outcomes["yield"] = np.exp(1.0 + 0.3 * truth + rng.normal(0.0, 0.2, size=len(outcomes)))
    outcomes["harvest_value"] = outcomes["yield"] * 2.0
    return PanelStore(metrics, {"ethiopia": outcomes})


def tiny_synth_config(**overrides):
    """Two pseudo-countries on a small grid with three years of weather."""
    params = dict(
        seed=7,
        countries=["ethiopia", "niger"],
        first_year=2001,
        n_years=3,
        x_ll=36.0,
        y_ll=8.0,
        strip_width_deg=1.0,
        height_deg=1.0,
        n_eas=4,
        households_per_ea=3,
        products=[
            SynthProduct(name="rain_p05", variable=Variable.PRECIPITATION_MM, cell_size=0.05),
            SynthProduct(name="rain_p25", variable=Variable.PRECIPITATION_MM, cell_size=0.25),
            SynthProduct(name="temp_p05", variable=Variable.TEMPERATURE_C, cell_size=0.05),
        ],
    )
    params.update(overrides)
    return SynthConfig(**params)


@pytest.fixture
def georef():
    return make_georef()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def households():
    """Two EAs in two admin squares; EA e1 urban, EA e2 rural."""
    return [
        Household("h1", "e1", "a1", 0.40, 30.40, Stratum.URBAN, SeasonRegion.UNIMODAL),
        Household("h2", "e1", "a1", 0.60, 30.60, Stratum.URBAN, SeasonRegion.UNIMODAL),
        Household("h3", "e2", "a2", 1.50, 31.50, Stratum.RURAL, SeasonRegion.UNIMODAL),
    ]


@pytest.fixture
def polygons():
    return [square("a1", 30.0, 0.0, 31.0, 1.0), square("a2", 31.0, 1.0, 32.0, 2.0)]


@pytest.fixture
def constant_stack():
    georef = make_georef(n_cols=3, n_rows=3, x_ll=30.0, y_ll=0.0, cell_size=1.0)
    return GridStack(georef, date(2001, 1, 1), np.full((365 * 3, 3, 3), 4.0), Variable.PRECIPITATION_MM)
