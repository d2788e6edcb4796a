import numpy as np
import pydantic
import pytest

from conftest import tiny_synth_config
from geomv.application.dto.manifest import SynthConfig, SynthProduct
from geomv.application.use_cases.econometrics import fit
from geomv.application.use_cases.extraction import ExtractionService
from geomv.application.use_cases.geomask import build_features
from geomv.application.use_cases.season_metrics import series_metrics, wide_table
from geomv.application.use_cases.synthgen import (
    block_average,
    build_fixture,
    fine_georef,
    gen_outcomes,
    gen_population,
    gen_weather,
)
from geomv.domain.entities.feature import MaskParams, Method
from geomv.domain.entities.household import Point
from geomv.domain.entities.raster import Variable
from geomv.domain.entities.regression import Form, RegressionSpec
from geomv.domain.entities.season import CALENDARS
from geomv.domain.errors import ConfigError

LINEAR_FE = RegressionSpec(Form.LINEAR, True)


def _joined(panel, weather):
    outcome = panel.rename(columns={"yield": "outcome"})[["household_id", "year", "outcome"]]
    return outcome.merge(weather, on=["household_id", "year"])


@pytest.fixture(scope="module")
def weather():
    return gen_weather(tiny_synth_config())


class TestWeather:
    def test_grids_nest(self, weather):
        fine, coarse = weather["rain_p05"], weather["rain_p25"]
        assert fine.georef.shape == (20, 40)
        assert coarse.georef.shape == (4, 8)
        assert coarse.georef.x_ll == fine.georef.x_ll and coarse.georef.y_ll == fine.georef.y_ll
        assert fine.n_days == 365 * 3

    def test_coarse_product_is_block_mean(self, weather):
        fine, coarse = weather["rain_p05"].values, weather["rain_p25"].values
        for day in (0, 180, 700):
            for r in range(4):
                for c in range(8):
                    block = fine[day, 5 * r : 5 * r + 5, 5 * c : 5 * c + 5]
                    assert coarse[day, r, c] == pytest.approx(block.mean(), abs=1e-12)

    def test_rain_is_non_negative(self, weather):
        assert (weather["rain_p05"].values >= 0.0).all()
        assert weather["temp_p05"].variable is Variable.TEMPERATURE_C

    def test_seeded(self, weather):
        again = gen_weather(tiny_synth_config())
        np.testing.assert_array_equal(again["rain_p05"].values, weather["rain_p05"].values)
        other = gen_weather(tiny_synth_config(seed=8))
        assert not np.array_equal(other["rain_p05"].values, weather["rain_p05"].values)

    def test_no_variation_gives_constant_field(self):
        config = tiny_synth_config(weather_noise_sd=0.0, spatial_amplitude=0.0, seasonal_amplitude=0.0, rain_mean_mm=2.5)
        stacks = gen_weather(config)
        assert np.all(stacks["rain_p05"].values == 2.5)
        assert np.all(stacks["rain_p25"].values == pytest.approx(2.5))

    def test_domain_must_tile(self):
        with pytest.raises(ConfigError):
            fine_georef(tiny_synth_config(strip_width_deg=1.03))
        bad = tiny_synth_config(
            products=[
                SynthProduct(name="rain_p05", variable=Variable.PRECIPITATION_MM, cell_size=0.05),
                SynthProduct(name="rain_p07", variable=Variable.PRECIPITATION_MM, cell_size=0.07),
            ]
        )
        with pytest.raises(ConfigError):
            gen_weather(bad)


def test_block_average_identity():
    values = np.arange(16.0).reshape(1, 4, 4)
    assert block_average(values, 1).tolist() == values.tolist()
    assert block_average(values, 2)[0].tolist() == [[2.5, 4.5], [10.5, 12.5]]


class TestPopulation:
    def test_counts_and_containment(self):
        config = tiny_synth_config()
        households, polygons = gen_population(config)
        assert set(households) == {"ethiopia", "niger"}
        grid = fine_georef(config)
        for country, members in households.items():
            assert len(members) == config.n_eas * config.households_per_ea
            assert len(polygons[country]) == config.admin_rows * config.admin_cols
            by_id = {p.admin_id: p for p in polygons[country]}
            for h in members:
                assert by_id[h.admin_id].contains(Point(h.lat, h.lon))
                assert grid.contains(h.lat, h.lon)

    def test_strata_are_uniform_within_ea(self):
        households, _ = gen_population(tiny_synth_config(n_eas=12))
        strata = {}
        for members in households.values():
            for h in members:
                strata.setdefault(h.ea_id, set()).add(h.stratum)
        assert all(len(s) == 1 for s in strata.values())

    def test_tiles_too_small_for_buffer(self):
        with pytest.raises(ConfigError):
            gen_population(tiny_synth_config(edge_buffer_km=40.0))


class TestOutcomes:
    def test_truth_components_add_up(self):
        fixture = build_fixture(tiny_synth_config())
        config = fixture.config
        for country in config.countries:
            panel = fixture.panels[country]
            truth = fixture.truth[country]
            assert len(panel) == config.n_eas * config.households_per_ea * 3
            assert (panel["yield"] >= 0).all() and (panel["harvest_value"] >= 0).all()
            c = truth.components
            expected = config.intercept + c["alpha_h"] + c["gamma_t"] + config.beta1 * c["weather"] + c["eps_yield"]
            np.testing.assert_allclose(np.arcsinh(panel["yield"].to_numpy()), expected.to_numpy(), rtol=1e-10)
            assert set(truth.metrics.columns) == {"household_id", "year", "weather"}

    def test_fixture_is_reproducible(self):
        a = build_fixture(tiny_synth_config())
        b = build_fixture(tiny_synth_config())
        for country in a.panels:
            assert a.panels[country].equals(b.panels[country])
            assert a.households[country] == b.households[country]

    def test_negative_outcomes_rejected(self):
        config = tiny_synth_config(intercept=-50.0)
        fixture_metrics = build_fixture(tiny_synth_config()).truth["ethiopia"].metrics
        with pytest.raises(ConfigError):
            gen_outcomes(config, fixture_metrics)

    def test_noiseless_outcomes_recover_slope(self):
        config = tiny_synth_config(noise_sd=0.0)
        fixture = build_fixture(config)
        for country in config.countries:
            truth = fixture.truth[country].metrics
            result = fit(_joined(fixture.panels[country], truth), LINEAR_FE)
            assert abs(result.beta1 - config.beta1) <= 1e-6

    def test_household_points_on_finest_grid_recover_slope(self):
        config = tiny_synth_config(countries=["ethiopia"], noise_sd=0.0)
        fixture = build_fixture(config)
        households = fixture.households["ethiopia"]
        features = [
            f
            for f in build_features(households, fixture.polygons["ethiopia"], MaskParams(seed=1))
            if f.method is Method.HH_BILINEAR
        ]
        series = ExtractionService(fixture.stacks["rain_p05"]).extract_all(features)
        region_of = {h.household_id: h.season_region for h in households}
        regions = {f.feature_id: region_of[f.household_id] for f in features}
        rows = series_metrics(series, CALENDARS["ethiopia"], regions, Variable.PRECIPITATION_MM)
        weather = wide_table(rows)[["household_id", "harvest_year", config.truth_metric]].rename(
            columns={"harvest_year": "year", config.truth_metric: "weather"}
        )
        result = fit(_joined(fixture.panels["ethiopia"], weather), LINEAR_FE)
        assert abs(result.beta1 - config.beta1) <= 1e-4


@pytest.mark.slow
def test_null_effect_rejection_rate_is_nominal():
    config = tiny_synth_config(countries=["ethiopia"], n_eas=16, households_per_ea=5, beta1=0.0)
    truth = build_fixture(config).truth["ethiopia"].metrics
    replicates = 1000
    rejections = 0
    for salt in range(1, replicates + 1):
        panel, _ = gen_outcomes(config, truth, salt)
        rejections += fit(_joined(panel, truth), LINEAR_FE).p1 < 0.05
    assert 0.03 <= rejections / replicates <= 0.07


class TestConfig:
    def test_unknown_country(self):
        with pytest.raises(pydantic.ValidationError):
            SynthConfig(countries=["atlantis"])

    def test_truth_product_defaults_to_finest(self):
        assert tiny_synth_config().truth().name == "rain_p05"
        assert tiny_synth_config(truth_metric="mean_c").truth().name == "temp_p05"

    def test_ascii_products_must_exist(self):
        with pytest.raises(pydantic.ValidationError):
            tiny_synth_config(ascii_products=["nope"])
