import numpy as np
import pytest

from conftest import square
from geomv.application.use_cases.geomask import (
    build_features,
    centroid_with_flag,
    displace,
    displacement_summary,
    ea_center,
    ea_rng,
    polygon_centroid,
)
from geomv.domain.entities.feature import Disk, MaskParams, Method, PolygonGeom
from geomv.domain.entities.household import AdminPolygon, Household, Point, SeasonRegion, Stratum
from geomv.domain.errors import (
    DisplacementError,
    EmptyGroupError,
    GroupingError,
    MissingAdminError,
    ValidationError,
)
from geomv.domain.geodesy import distance_km

ORIGIN = Point(9.0, 38.7)


def _distances(stratum, params, n, seed=1):
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    for i in range(n):
        moved, _ = displace(ORIGIN, stratum, params, rng)
        out[i] = distance_km(ORIGIN, moved.lat, moved.lon)
    return out


class TestDisplace:
    def test_urban_uniform_up_to_two_km(self):
        d = _distances(Stratum.URBAN, MaskParams(), 100_000)
        assert d.max() <= 2.0 + 1e-9
        assert d.mean() == pytest.approx(1.0, rel=0.01)

    def test_rural_without_extra_share(self):
        d = _distances(Stratum.RURAL, MaskParams(rural_extra_share=0.0), 20_000)
        assert d.max() <= 5.0 + 1e-9
        assert d.mean() == pytest.approx(2.5, rel=0.02)

    def test_rural_extra_share_reaches_ten_km(self):
        d = _distances(Stratum.RURAL, MaskParams(rural_extra_share=0.5), 20_000)
        assert d.max() <= 10.0 + 1e-9
        # half the draws use the 10 km range, half of those land beyond 5 km
        assert np.mean(d > 5.0) == pytest.approx(0.25, abs=0.02)

    def test_bearing_is_isotropic(self):
        rng = np.random.default_rng(5)
        moves = [displace(ORIGIN, Stratum.URBAN, MaskParams(), rng)[0] for _ in range(20_000)]
        north = np.mean([m.lat > ORIGIN.lat for m in moves])
        east = np.mean([m.lon > ORIGIN.lon for m in moves])
        assert north == pytest.approx(0.5, abs=0.02)
        assert east == pytest.approx(0.5, abs=0.02)


def test_mask_params_ordering():
    with pytest.raises(ValidationError):
        MaskParams(urban_max_km=6.0)
    with pytest.raises(ValidationError):
        MaskParams(rural_extra_share=1.5)


def test_ea_rng_is_keyed_by_seed_and_ea():
    assert ea_rng(3, "e1").random() == ea_rng(3, "e1").random()
    assert ea_rng(3, "e1").random() != ea_rng(3, "e2").random()
    assert ea_rng(3, "e1").random() != ea_rng(4, "e1").random()


class TestEaCenter:
    def test_mean_of_members(self, households):
        assert ea_center(households[:2]) == Point(pytest.approx(0.5), pytest.approx(30.5))

    def test_empty(self):
        with pytest.raises(EmptyGroupError):
            ea_center([])

    def test_mixed_eas(self, households):
        with pytest.raises(GroupingError):
            ea_center(households)


class TestCentroid:
    def test_square(self):
        point, external = centroid_with_flag(square("a", 30.0, 0.0, 32.0, 2.0))
        assert point == Point(1.0, 31.0)
        assert not external

    def test_u_shape_snaps_to_boundary(self):
        ring = ((0, 0), (3, 0), (3, 3), (2, 3), (2, 1), (1, 1), (1, 3), (0, 3), (0, 0))
        polygon = AdminPolygon("u", (ring,))
        point, external = centroid_with_flag(polygon)
        assert external
        assert polygon.contains(point)


class TestBuildFeatures:
    def test_ten_features_per_household_in_order(self, households, polygons):
        features = build_features(households, polygons, MaskParams(seed=1))
        assert len(features) == 10 * len(households)
        assert [f.household_id for f in features[:10]] == ["h1"] * 10
        assert [f.method for f in features[:10]] == list(Method)
        assert features[0].feature_id == "h1:hh_simple"

    def test_geometries(self, households, polygons):
        features = build_features(households, polygons, MaskParams(seed=1))
        h1 = {f.method: f.geometry for f in features if f.household_id == "h1"}
        h2 = {f.method: f.geometry for f in features if f.household_id == "h2"}
        h3 = {f.method: f.geometry for f in features if f.household_id == "h3"}
        assert h1[Method.HH_SIMPLE] == h1[Method.HH_BILINEAR] == Point(0.40, 30.40)
        assert h1[Method.EA_SIMPLE] == h2[Method.EA_SIMPLE]
        assert h1[Method.EA_MOD_SIMPLE] == h1[Method.EA_MOD_BILINEAR] == h2[Method.EA_MOD_SIMPLE]
        assert h1[Method.ADMIN_CENTER_SIMPLE] == polygon_centroid(polygons[0])
        assert isinstance(h1[Method.ADMIN_ZONE], PolygonGeom)
        assert h1[Method.EA_ZONE] == Disk(h1[Method.EA_MOD_SIMPLE], 2.0)
        assert h3[Method.EA_ZONE].radius_km == 10.0
        moved = h3[Method.EA_MOD_SIMPLE]
        assert distance_km(h3[Method.EA_SIMPLE], moved.lat, moved.lon) <= 10.0 + 1e-9

    def test_seeded_and_parallel_invariant(self, households, polygons):
        params = MaskParams(seed=42)
        serial = build_features(households, polygons, params)
        assert build_features(households, polygons, params) == serial
        assert build_features(households, polygons, params, parallelism=3) == serial
        other = build_features(households, polygons, MaskParams(seed=43))
        assert other != serial

    def test_ea_draw_does_not_depend_on_other_eas(self, households, polygons):
        params = MaskParams(seed=42)
        alone = build_features(households[2:], polygons, params)
        together = build_features(households, polygons, params)
        pick = lambda feats: [f.geometry for f in feats if f.household_id == "h3"]  # noqa: E731
        assert pick(alone) == pick(together)

    def test_missing_admin(self, households, polygons):
        with pytest.raises(MissingAdminError) as exc:
            build_features(households, polygons[:1], MaskParams())
        assert exc.value.admin_id == "a2"

    def test_mixed_strata_in_ea(self, households, polygons):
        intruder = Household("h4", "e1", "a1", 0.5, 30.5, Stratum.RURAL, SeasonRegion.UNIMODAL)
        with pytest.raises(GroupingError):
            build_features(households + [intruder], polygons, MaskParams())

    def test_constrain_to_admin(self, polygons):
        edge = [Household("h9", "e9", "a1", 0.005, 30.5, Stratum.RURAL)]
        outside = 0
        for seed in range(40):
            free = build_features(edge, polygons, MaskParams(seed=seed))
            kept = build_features(edge, polygons, MaskParams(seed=seed, constrain_to_admin=True))
            free_point = next(f.geometry for f in free if f.method is Method.EA_MOD_SIMPLE)
            kept_point = next(f.geometry for f in kept if f.method is Method.EA_MOD_SIMPLE)
            outside += not polygons[0].contains(free_point)
            assert polygons[0].contains(kept_point)
        assert outside > 0

    def test_constrain_to_admin_gives_up(self, polygons):
        far = [Household("h9", "e9", "a1", 5.0, 35.0, Stratum.URBAN)]
        with pytest.raises(DisplacementError):
            build_features(far, polygons, MaskParams(constrain_to_admin=True))


def test_displacement_summary(households, polygons):
    features = build_features(households, polygons, MaskParams(seed=3))
    summary = displacement_summary(features, households)
    assert list(summary.columns) == ["method", "stratum", "n", "mean_km", "median_km", "max_km"]
    assert summary["method"].iloc[0] == "hh_simple"
    hh = summary[summary["method"] == "hh_simple"]
    assert (hh["max_km"] == 0.0).all()
    urban_mod = summary[(summary["method"] == "ea_mod_simple") & (summary["stratum"] == "urban")]
    assert int(urban_mod["n"].iloc[0]) == 2
