import numpy as np
import pytest

from densnav import basis as ba
from densnav import terrain as tr
from densnav.dynamics import Box


@pytest.fixture(scope="module")
def grid():
    return ba.build_quadrature(Box([-3, -3], [9, 9]), [240, 240])


def test_flat_terrain():
    t = tr.AnalyticTerrain((), 0.2)
    np.testing.assert_array_equal(t(np.random.default_rng(0).random((10, 3))), 0.2)
    assert tr.eval_b(t, np.array([1.0, 2.0, 0.5])) == 0.2


def test_single_hill_formula():
    t = tr.AnalyticTerrain((tr.Hill((1.0, 2.0), 2.0, 0.5),), 0.1)
    x = np.array([1.5, 2.0])
    assert tr.eval_b(t, x) == pytest.approx(0.1 + 2.0 * np.exp(-0.5))


def test_heading_does_not_change_b():
    x = np.array([[2.0, 6.0, 0.0], [2.0, 6.0, 2.5]])
    b = tr.HILLS_A(x)
    assert b[0] == b[1]


def test_raster_reproduces_nodes(tmp_path):
    vals = tr.rasterize(tr.HILLS_B, -3.0, -3.0, 0.5, 0.25, 25, 49)
    tr.write_raster(tmp_path / "t.raster", -3.0, -3.0, 0.5, 0.25, vals)
    r = tr.read_raster(tmp_path / "t.raster")
    xs = -3.0 + 0.5 * np.arange(25)
    ys = -3.0 + 0.25 * np.arange(49)
    gx, gy = np.meshgrid(xs, ys)
    P = np.column_stack([gx.ravel(), gy.ravel()])
    np.testing.assert_array_equal(r(P), tr.HILLS_B(P))


def test_raster_bilinear_midpoint_and_clamp():
    r = tr.RasterTerrain(0.0, 0.0, 1.0, 1.0, np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert r(np.array([[0.5, 0.5]]))[0] == pytest.approx(1.5)
    # outside the extent the nearest edge value is used
    assert r(np.array([[5.0, -4.0]]))[0] == 1.0


def test_raster_normalize(tmp_path):
    tr.write_raster(tmp_path / "r", 0, 0, 1, 1, np.array([[2.0, 4.0], [6.0, 10.0]]))
    r = tr.read_raster(tmp_path / "r", normalize=True)
    np.testing.assert_allclose(r.values, [[0, 0.25], [0.5, 1.0]])


def test_raster_bad_header(tmp_path):
    (tmp_path / "r").write_text("raster 1 2\n")
    with pytest.raises(ValueError):
        tr.read_raster(tmp_path / "r")


def test_binary_obstacle_values():
    t = tr.BinaryObstacle(tr.Ball((3.0, 4.0), 1.0))
    assert t(np.array([[3.0, 4.0]]))[0] == pytest.approx(1 / np.pi)
    assert t(np.array([[5.0, 4.0]]))[0] == 0.0


def test_box_measure_flat(grid):
    t = tr.AnalyticTerrain((), 1.0)
    assert tr.trav_measure(t, tr.Rect((0.0, 0.0), (2.0, 1.0)), grid) == pytest.approx(2.0, rel=0.01)


def test_monotone_in_region(grid):
    small = tr.trav_measure(tr.HILLS_A, tr.Ball((2, 6), 0.5), grid)
    big = tr.trav_measure(tr.HILLS_A, tr.Ball((2, 6), 1.0), grid)
    assert small < big


def test_binary_obstacle_total_mass(grid):
    t = tr.BinaryObstacle(tr.Ball((3.0, 4.0), 1.0))
    assert tr.trav_measure(t, tr.Rect((-3, -3), (9, 9)), grid) == pytest.approx(1.0, rel=0.02)


def test_binary_obstacle_partial_overlap(grid):
    t = tr.BinaryObstacle(tr.Ball((3.0, 4.0), 1.0))
    # the half plane x >= 3 holds half the disk
    assert tr.trav_measure(t, tr.Rect((3, -3), (9, 9)), grid) == pytest.approx(0.5, rel=0.02)


def test_additive_over_disjoint(grid):
    a, b = tr.Rect((0, 0), (2, 2)), tr.Rect((2.01, 0), (4, 2))
    u = tr.Rect((0, 0), (4, 2))
    total = tr.trav_measure(tr.HILLS_A, a, grid) + tr.trav_measure(tr.HILLS_A, b, grid)
    assert total == pytest.approx(tr.trav_measure(tr.HILLS_A, u, grid), rel=0.01)


def test_scaling_exact(grid):
    t1 = tr.AnalyticTerrain((tr.Hill((1, 1), 1.0, 1.0),), 0.25)
    t2 = tr.AnalyticTerrain((tr.Hill((1, 1), 4.0, 1.0),), 1.0)
    A = tr.Ball((1, 1), 2.0)
    assert tr.trav_measure(t2, A, grid) == pytest.approx(4 * tr.trav_measure(t1, A, grid), rel=1e-14)


def test_empty_measurement_raises():
    g = ba.build_quadrature(Box([0, 0], [1, 1]), [2, 2])
    with pytest.raises(tr.MeasurementError):
        tr.trav_measure(tr.HILLS_A, tr.Ball((0.5, 0.5), 0.01), g)


def test_indicator_closed_convention():
    ind = tr.indicator_vector(tr.Ball((3.0, 4.0), 1.0))
    np.testing.assert_array_equal(ind(np.array([[3.0, 4.0], [5.0, 4.0], [4.0, 4.0]])), [1, 0, 1])


def test_union_area_and_from_dict():
    reg = tr.region_from_dict({"union": [{"ball": {"center": [0, 0], "radius": 1}},
                                         {"box": {"lo": [2, 2], "hi": [3, 4]}}]})
    assert reg.area == pytest.approx(np.pi + 2, rel=1e-3)
    assert reg.contains(np.array([[2.5, 3.0], [1.5, 0.0]])).tolist() == [True, False]


def test_bundled_terrains_nonnegative():
    P = np.random.default_rng(0).uniform(-3, 9, (1000, 2))
    for t in tr.BUNDLED.values():
        assert np.all(t(P) >= 0.05)


def test_padded_terrain_adds_cost_outside_box():
    t = tr.PaddedTerrain(tr.AnalyticTerrain((), 0.1), (-3, -3), (9, 9), 5.0)
    X = np.array([[0.0, 0.0, 1.0], [9.0, 9.0, 0.0], [9.5, 0.0, 0.0], [0.0, -4.0, 0.0]])
    np.testing.assert_allclose(t(X), [0.1, 0.1, 5.1, 5.1])
