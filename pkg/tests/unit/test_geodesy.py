import math

import numpy as np
import pytest

from geomv.domain.entities.household import Point
from geomv.domain.errors import PolarGuardError
from geomv.domain.geodesy import KM_PER_DEGREE, degree_span, distance_km, guard_polar, step


class TestStep:
    def test_zero_distance_is_identity(self):
        p = Point(9.5, 38.75)
        assert step(p, 0.0, 1.234) == p

    def test_north_moves_latitude_only(self):
        moved = step(Point(0.0, 30.0), KM_PER_DEGREE, 0.0)
        assert moved.lat == pytest.approx(1.0, abs=1e-12)
        assert moved.lon == pytest.approx(30.0, abs=1e-12)

    def test_east_scales_with_cos_latitude(self):
        moved = step(Point(60.0, 0.0), KM_PER_DEGREE, math.pi / 2)
        assert moved.lon == pytest.approx(2.0, rel=1e-9)
        assert moved.lat == pytest.approx(60.0, abs=1e-12)

    def test_distance_round_trip(self):
        origin = Point(-12.0, 34.0)
        for bearing in np.linspace(0.0, 2.0 * math.pi, 9):
            moved = step(origin, 3.7, bearing)
            assert float(distance_km(origin, moved.lat, moved.lon)) == pytest.approx(3.7, rel=1e-9)

    def test_polar_guard(self):
        with pytest.raises(PolarGuardError):
            step(Point(89.95, 0.0), 1.0, 0.0)
        guard_polar(89.9)


def test_degree_span_widens_in_longitude():
    dlat, dlon = degree_span(Point(45.0, 0.0), 10.0)
    assert dlat == pytest.approx(10.0 / KM_PER_DEGREE)
    assert dlon == pytest.approx(dlat * math.sqrt(2.0), rel=1e-12)


def test_distance_vectorized():
    d = distance_km(Point(0.0, 0.0), [0.0, 1.0], [1.0, 0.0])
    assert d.shape == (2,)
    assert d.tolist() == pytest.approx([KM_PER_DEGREE, KM_PER_DEGREE])
