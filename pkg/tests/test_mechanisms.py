"""Behaviour of the masking methods on synthetic fields with a known truth."""

import numpy as np
import pytest
from scipy import stats

from conftest import tiny_synth_config
from geomv.application.dto.manifest import SynthProduct
from geomv.application.use_cases.econometrics import fit
from geomv.application.use_cases.extraction import ExtractionService
from geomv.application.use_cases.geomask import build_features
from geomv.application.use_cases.season_metrics import series_metrics, wide_table
from geomv.application.use_cases.synthgen import build_fixture, gen_population, gen_weather
from geomv.domain.entities.feature import MaskParams, Method
from geomv.domain.entities.raster import Variable
from geomv.domain.entities.regression import Form, RegressionSpec
from geomv.domain.entities.season import CALENDARS

FINE = SynthProduct(name="rain_p05", variable=Variable.PRECIPITATION_MM, cell_size=0.05)
COARSE = SynthProduct(name="rain_p50", variable=Variable.PRECIPITATION_MM, cell_size=0.5)
POOLED = RegressionSpec(Form.LINEAR, False)


def test_small_displacement_leaves_coarse_extraction_unchanged():
    config = tiny_synth_config(products=[FINE, COARSE], n_eas=16)
    stack = gen_weather(config)["rain_p50"]
    households, polygons = gen_population(config)
    service = ExtractionService(stack)
    grid = stack.georef
    params = MaskParams(urban_max_km=2.0, rural_max_km=2.0, rural_extra_max_km=2.0, rural_extra_share=0.0, seed=3)

    same_cell = 0
    total = 0
    for country, members in households.items():
        features = build_features(members, polygons[country], params)
        by_household = {}
        for f in features:
            if f.method in (Method.EA_SIMPLE, Method.EA_MOD_SIMPLE):
                by_household.setdefault(f.household_id, {})[f.method] = f
        for pair in by_household.values():
            original, moved = pair[Method.EA_SIMPLE], pair[Method.EA_MOD_SIMPLE]
            total += 1
            if grid.cell_of(*original.geometry) != grid.cell_of(*moved.geometry):
                continue
            same_cell += 1
            a, b = service.extract_all([original, moved])
            np.testing.assert_array_equal(a.values, b.values)
    assert total == 2 * 16 * 3
    assert same_cell / total >= 0.95


def _admin_and_household_errors(seed):
    config = tiny_synth_config(
        seed=seed,
        countries=["ethiopia"],
        products=[FINE],
        n_eas=8,
        households_per_ea=4,
        beta1=1.0,
        household_sd=0.0,
        year_sd=0.0,
        noise_sd=0.05,
    )
    fixture = build_fixture(config)
    households = fixture.households["ethiopia"]
    truth = fixture.truth["ethiopia"].metrics
    panel = fixture.panels["ethiopia"].rename(columns={"yield": "outcome"})[["household_id", "year", "outcome"]]

    features = [
        f
        for f in build_features(households, fixture.polygons["ethiopia"], MaskParams(seed=seed))
        if f.method is Method.ADMIN_ZONE
    ]
    series = ExtractionService(fixture.stacks["rain_p05"]).extract_all(features)
    region_of = {h.household_id: h.season_region for h in households}
    regions = {f.feature_id: region_of[f.household_id] for f in features}
    rows = series_metrics(series, CALENDARS["ethiopia"], regions, Variable.PRECIPITATION_MM)
    admin = wide_table(rows)[["household_id", "harvest_year", "mean_daily_mm"]].rename(
        columns={"harvest_year": "year", "mean_daily_mm": "weather"}
    )

    household_fit = fit(panel.merge(truth, on=["household_id", "year"]), POOLED)
    admin_fit = fit(panel.merge(admin, on=["household_id", "year"]), POOLED)
    return abs(admin_fit.beta1 - 1.0), abs(household_fit.beta1 - 1.0)


@pytest.mark.slow
def test_admin_zone_attenuates_more_than_household_points():
    errors = np.array([_admin_and_household_errors(seed) for seed in range(200)])
    admin, household = errors[:, 0], errors[:, 1]
    assert admin.mean() > household.mean()
    assert stats.ttest_rel(admin, household, alternative="greater").pvalue < 0.05
