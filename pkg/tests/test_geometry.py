import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivermamba.geometry import (WGS84_A_KM, WGS84_B_KM, GeoPoint, PointSet, diagnostic_mask,
                                 filter_diagnostic_points, wgs84_cartesian)


def test_cartesian_equator_and_quarter_turn():
    assert np.allclose(wgs84_cartesian(0.0, 0.0), (WGS84_A_KM, 0.0, 0.0), atol=1e-9)
    assert np.allclose(wgs84_cartesian(0.0, 90.0), (0.0, WGS84_A_KM, 0.0), atol=1e-9)


def test_cartesian_pole_is_semi_minor_axis():
    # z = (1 - e^2) N sin(phi), with N = a / sqrt(1 - e^2) at the pole, reduces to b
    for lon in (0.0, 37.0, -120.0):
        x, y, z = wgs84_cartesian(90.0, lon)
        assert abs(x) < 1e-9 and abs(y) < 1e-9
        assert z == pytest.approx(WGS84_B_KM, abs=1e-9)


def test_cartesian_norm_between_axes():
    rng = np.random.default_rng(0)
    lat = rng.uniform(-90, 90, 10_000)
    lon = rng.uniform(-180, 180, 10_000)
    r = np.linalg.norm(np.stack(wgs84_cartesian(lat, lon), axis=-1), axis=-1)
    assert r.min() >= WGS84_B_KM - 1e-9 and r.max() <= WGS84_A_KM + 1e-9


def test_cartesian_height_moves_along_normal():
    p0 = np.array(wgs84_cartesian(45.0, 10.0, 0.0))
    p1 = np.array(wgs84_cartesian(45.0, 10.0, 1.0))
    assert np.linalg.norm(p1 - p0) == pytest.approx(1.0, rel=1e-12)


def _brute_filter(land, med, gauged, thr=10.0):
    h, w = land.shape
    keep = np.zeros_like(land)
    for y in range(h):
        for x in range(w):
            near = False
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and land[yy, xx] and med[yy, xx] >= thr:
                        near = True
            keep[y, x] = (land[y, x] and near) or gauged[y, x]
    return keep


def test_filter_examples():
    land = np.ones((5, 5), bool)
    med = np.zeros((5, 5))
    gauged = np.zeros((5, 5), bool)
    med[2, 2] = 12.0
    mask = diagnostic_mask(land, med, gauged)
    assert mask[2, 2]
    assert mask[1, 1] and mask[3, 3]  # within Chebyshev distance 1 of the 12 m3/s cell
    assert not mask[0, 0]
    med2 = np.full((5, 5), 3.0)
    med2[0, 4] = 15.0
    mask2 = diagnostic_mask(land, med2, gauged)
    assert mask2[1, 3] and not mask2[4, 0]


def test_filter_no_points_raises():
    with pytest.raises(ValueError, match="no diagnostic points"):
        diagnostic_mask(np.ones((3, 3), bool), np.zeros((3, 3)), np.zeros((3, 3), bool))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_filter_matches_brute_force_and_keeps_gauges(seed):
    rng = np.random.default_rng(seed)
    land = rng.random((5, 6)) < 0.8
    med = rng.exponential(6.0, (5, 6))
    gauged = rng.random((5, 6)) < 0.1
    if not _brute_filter(land, med, gauged).any():
        gauged[0, 0] = True
    mask = diagnostic_mask(land, med, gauged)
    assert np.array_equal(mask, _brute_filter(land, med, gauged))
    assert mask[gauged].all()
    # idempotent: filtering the survivors again keeps all of them
    again = diagnostic_mask(land & mask, np.where(mask, med, 0.0), gauged & mask)
    assert np.array_equal(again & mask, again)


def test_filter_diagnostic_points_builds_pointset():
    land = np.ones((4, 4), bool)
    med = np.zeros((4, 4))
    med[0, 0] = 20.0
    ps = filter_diagnostic_points(land, med, np.zeros((4, 4), bool))
    assert sorted(map(tuple, ps.grid_xy)) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def _pts(n=3, attrs=2):
    return [GeoPoint(f"q{i}", 10.0 + i, 20.0 - i, 100.0 * i, (i, 0), np.arange(attrs) + i) for i in range(n)]


def test_pointset_invariants():
    with pytest.raises(ValueError):
        PointSet([], 3, 3)
    with pytest.raises(ValueError, match="outside"):
        PointSet([GeoPoint("a", 0, 0, 0, (3, 0))], 3, 3)
    with pytest.raises(ValueError, match="duplicate grid cell"):
        PointSet([GeoPoint("a", 0, 0, 0, (1, 1)), GeoPoint("b", 0, 0, 0, (1, 1))], 3, 3)
    with pytest.raises(ValueError, match="static_attrs"):
        PointSet([GeoPoint("a", 0, 0, 0, (0, 0), np.zeros(2)), GeoPoint("b", 0, 0, 0, (1, 1), np.zeros(3))], 3, 3)


def test_pointset_csv_roundtrip_and_positional_columns():
    ps = PointSet(_pts(), 4, 2)
    back = PointSet.from_csv(ps.to_csv())
    assert back == ps
    assert ps.to_csv().splitlines()[1] == "id,lat,lon,elev,gx,gy,s0,s1"
    m = ps.static_matrix(positional=True)
    assert m.shape == (3, 5)
    assert np.all(np.linalg.norm(m[:, 2:], axis=1) < 1.001)
    assert ps.id_to_index["q2"] == 2
